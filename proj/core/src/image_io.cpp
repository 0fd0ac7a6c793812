// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/image_io.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>

#include "sparseview/common.hpp"

namespace sparseview {

namespace {

void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v >> 24));
  buf.push_back(static_cast<std::uint8_t>(v >> 16));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
  buf.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_chunk(std::ofstream& out, const char type[4],
                 const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> head;
  append_u32(head, static_cast<std::uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
  const auto crc = crc32(0, body.data(), static_cast<uInt>(body.size()));
  std::vector<std::uint8_t> tail;
  append_u32(tail, static_cast<std::uint32_t>(crc));
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

std::vector<std::uint8_t> deflate_all(const std::vector<std::uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw IoError("png: deflate failed");
  }
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> inflate_all(const std::vector<std::uint8_t>& comp,
                                      std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf len = static_cast<uLongf>(expected);
  if (uncompress(out.data(), &len, comp.data(), static_cast<uLong>(comp.size())) !=
      Z_OK || len != expected) {
    throw IoError("png: inflate failed");
  }
  return out;
}

void write_png_impl(const std::string& path, const ImageU8& img, int bit_depth) {
  const int w = img.width(), h = img.height(), ch = img.channels();
  int color_type;
  if (ch == 1) color_type = 0;
  else if (ch == 3) color_type = 2;
  else if (ch == 4) color_type = 6;
  else throw IoError("png: unsupported channel count " + std::to_string(ch));
  if (bit_depth == 1 && ch != 1) throw IoError("png: 1-bit must be grayscale");

  const std::size_t row_bytes =
      bit_depth == 8 ? static_cast<std::size_t>(w) * ch : (static_cast<std::size_t>(w) + 7) / 8;
  std::vector<std::uint8_t> raw;
  raw.reserve((row_bytes + 1) * h);
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter type none
    if (bit_depth == 8) {
      raw.insert(raw.end(),
                 img.data().begin() + static_cast<std::size_t>(y) * w * ch,
                 img.data().begin() + static_cast<std::size_t>(y + 1) * w * ch);
    } else {
      std::uint8_t acc = 0;
      int nbits = 0;
      std::size_t emitted = 0;
      for (int x = 0; x < w; ++x) {
        acc = static_cast<std::uint8_t>((acc << 1) | (img.at(x, y) ? 1 : 0));
        if (++nbits == 8) {
          raw.push_back(acc);
          ++emitted;
          acc = 0;
          nbits = 0;
        }
      }
      if (nbits > 0) {
        raw.push_back(static_cast<std::uint8_t>(acc << (8 - nbits)));
        ++emitted;
      }
      while (emitted < row_bytes) {
        raw.push_back(0);
        ++emitted;
      }
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("png: cannot open for write: " + path);
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  append_u32(ihdr, static_cast<std::uint32_t>(w));
  append_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(static_cast<std::uint8_t>(bit_depth));
  ihdr.push_back(static_cast<std::uint8_t>(color_type));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", deflate_all(raw));
  write_chunk(out, "IEND", {});
  if (!out) throw IoError("png: write failed: " + path);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
  write_png_impl(path, img, 8);
}

void write_png_mask(const std::string& path, const ImageU8& mask) {
  if (mask.channels() != 1) throw IoError("png mask: expected 1 channel");
  write_png_impl(path, mask, 1);
}

ImageU8 read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("png: cannot open: " + path);
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0) {
    throw IoError("png: bad signature: " + path);
  }

  int w = 0, h = 0, bit_depth = 0, color_type = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= file.size()) {
    const std::uint32_t len = read_u32(&file[pos]);
    const std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
    if (pos + 12 + len > file.size()) throw IoError("png: truncated chunk");
    const std::uint8_t* payload = &file[pos + 8];
    if (type == "IHDR") {
      w = static_cast<int>(read_u32(payload));
      h = static_cast<int>(read_u32(payload + 4));
      bit_depth = payload[8];
      color_type = payload[9];
      if (payload[12] != 0) throw IoError("png: interlaced input unsupported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0) throw IoError("png: missing IHDR");
  int ch;
  if (color_type == 0) ch = 1;
  else if (color_type == 2) ch = 3;
  else if (color_type == 6) ch = 4;
  else throw IoError("png: unsupported color type " + std::to_string(color_type));
  if (bit_depth != 8 && !(bit_depth == 1 && color_type == 0)) {
    throw IoError("png: unsupported bit depth " + std::to_string(bit_depth));
  }

  const std::size_t row_bytes = bit_depth == 8
                                    ? static_cast<std::size_t>(w) * ch
                                    : (static_cast<std::size_t>(w) + 7) / 8;
  const std::size_t bpp = bit_depth == 8 ? static_cast<std::size_t>(ch) : 1;
  std::vector<std::uint8_t> raw = inflate_all(idat, (row_bytes + 1) * h);

  ImageU8 img(w, h, ch);
  std::vector<std::uint8_t> prev(row_bytes, 0);
  std::vector<std::uint8_t> cur(row_bytes, 0);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[(row_bytes + 1) * y];
    const std::uint8_t* src = &raw[(row_bytes + 1) * y + 1];
    for (std::size_t i = 0; i < row_bytes; ++i) {
      const int a = i >= bpp ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= bpp ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError("png: bad filter type");
      }
      cur[i] = static_cast<std::uint8_t>(v & 0xff);
    }
    if (bit_depth == 8) {
      std::memcpy(&img.data()[static_cast<std::size_t>(y) * w * ch], cur.data(),
                  row_bytes);
    } else {
      for (int x = 0; x < w; ++x) {
        const std::uint8_t byte = cur[x / 8];
        img.at(x, y) = (byte >> (7 - (x % 8))) & 1;
      }
    }
    std::swap(prev, cur);
  }
  return img;
}

void write_pfm(const std::string& path, const ImageD& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw IoError("pfm: expected 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pfm: cannot open for write: " + path);
  out << (img.channels() == 3 ? "PF" : "Pf") << "\n"
      << img.width() << " " << img.height() << "\n"
      << "-1.0\n";
  // PFM rows are stored bottom-to-top
  std::vector<float> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int y = img.height() - 1; y >= 0; --y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        row[static_cast<std::size_t>(x) * img.channels() + c] =
            static_cast<float>(img.at(x, y, c));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("pfm: write failed: " + path);
}

ImageD read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pfm: cannot open: " + path);
  std::string magic;
  in >> magic;
  int ch;
  if (magic == "PF") ch = 3;
  else if (magic == "Pf") ch = 1;
  else throw IoError("pfm: bad magic in " + path);
  int w, h;
  double scale;
  in >> w >> h >> scale;
  in.get();  // single whitespace after the scale line
  if (!in || w <= 0 || h <= 0) throw IoError("pfm: bad header in " + path);
  const bool little_endian = scale < 0;
  if (!little_endian) throw IoError("pfm: big-endian input unsupported");
  ImageD img(w, h, ch);
  std::vector<float> row(static_cast<std::size_t>(w) * ch);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw IoError("pfm: truncated data in " + path);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        img.at(x, y, c) = row[static_cast<std::size_t>(x) * ch + c];
      }
    }
  }
  return img;
}

}  // namespace sparseview
