// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

#include "gatectl/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gatectl {

namespace fs = std::filesystem;

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks to stay portable.
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = ::crc32(crc, data.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, const std::string& origin)
      : data_(data), origin_(origin) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw CheckpointError(origin_ + ": truncated while reading " + what);
    }
  }

  std::span<const std::uint8_t> data_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const std::string& what) {
  if (v > 0xffffffffu) throw CheckpointError(what + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

Bytes encode_checkpoint(const ModelParams& params) {
  Bytes out{'G', 'T', 'C', 'K'};
  put_u32(out, kCheckpointVersion);
  put_u32(out, checked_u32(params.size(), "tensor count"));
  for (const auto& [name, var] : params) {
    const Tensor& t = var.value();
    put_u32(out, checked_u32(name.size(), "name length"));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, checked_u32(t.rank(), "rank"));
    for (std::size_t d : t.shape()) put_u32(out, checked_u32(d, "dimension"));
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  put_u32(out, crc32(out));
  return out;
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> data, const std::string& origin) {
  if (data.size() < 16) throw CheckpointError(origin + ": file too short to be a checkpoint");
  if (std::memcmp(data.data(), "GTCK", 4) != 0) throw CheckpointError(origin + ": bad magic");
  const auto body = data.first(data.size() - 4);
  Reader trailer(data.last(4), origin);
  const std::uint32_t stored = trailer.u32("crc");
  const std::uint32_t actual = crc32(body);
  if (stored != actual) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": CRC mismatch (stored %08x, computed %08x)", stored, actual);
    throw CheckpointError(origin + buf);
  }

  Reader r(body, origin);
  r.bytes(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(origin + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("tensor count");
  ModelParams params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    const auto name_bytes = r.bytes(len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0) throw CheckpointError(origin + ": tensor '" + name + "' has rank 0");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t d = r.u32("dimension");
      if (d == 0) throw CheckpointError(origin + ": tensor '" + name + "' has a zero dimension");
      shape.push_back(d);
      numel *= d;
    }
    if (numel > (body.size() - r.pos()) / 4) {
      throw CheckpointError(origin + ": truncated while reading payload of '" + name + "'");
    }
    Tensor t(shape);
    for (std::size_t k = 0; k < numel; ++k) {
      t[k] = static_cast<double>(std::bit_cast<float>(r.u32("payload")));
    }
    if (!params.emplace(name, Var(std::move(t))).second) {
      throw CheckpointError(origin + ": duplicate tensor '" + name + "'");
    }
  }
  if (r.pos() != body.size()) throw CheckpointError(origin + ": trailing bytes before CRC");
  return params;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Bytes read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void save_checkpoint(const fs::path& path, const ModelParams& params) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError(path.string() + ": no such checkpoint");
  return decode_checkpoint(read_file(path), path.string());
}

// ---------------------------------------------------------------------------

Bytes encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.shape()[0] != 3) {
    throw DimensionError("ppm: expected a [3 x H x W] image, got " + shape_str(image.shape()));
  }
  const std::size_t h = image.shape()[1], w = image.shape()[2], plane = h * w;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + 3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(image[c * plane + i], 0.0, 1.0);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  return out;
}

Tensor decode_ppm(std::span<const std::uint8_t> data) {
  std::size_t pos = 0;
  auto token = [&] {
    while (pos < data.size() && std::isspace(data[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(data[pos])) ++pos;
    return std::string(data.begin() + static_cast<std::ptrdiff_t>(start),
                       data.begin() + static_cast<std::ptrdiff_t>(pos));
  };
  if (token() != "P6") throw std::runtime_error("ppm: not a P6 file");
  const std::size_t w = std::stoul(token()), h = std::stoul(token());
  if (token() != "255") throw std::runtime_error("ppm: maxval must be 255");
  ++pos;  // single whitespace before the raster
  if (data.size() - pos != 3 * w * h) throw std::runtime_error("ppm: raster size mismatch");
  Tensor image({3, h, w});
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) image[c * w * h + i] = data[pos + 3 * i + c] / 255.0;
  return image;
}

void write_ppm(const fs::path& path, const Tensor& image) { write_file_atomic(path, encode_ppm(image)); }

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string convergence_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kConvergenceHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + format_double(r.loss_smoothed) + "," +
           format_double(r.loss_raw);
    if (r.metrics) {
      out += "," + format_double(r.metrics->edge_f1) + "," + format_double(r.metrics->mse) + "," +
             format_double(r.metrics->psnr);
    } else {
      out += ",,,";
    }
    out += "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double_field(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw CsvError(where + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<MetricsRow> parse_convergence_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = origin + ":" + std::to_string(lineno);
    if (lineno == 1) {
      if (line != kConvergenceHeader) throw CsvError(where + ": expected header '" +
                                                     std::string(kConvergenceHeader) + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      throw CsvError(where + ": expected 6 fields, got " + std::to_string(f.size()));
    }
    MetricsRow r;
    std::size_t step = 0;
    const auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), step);
    if (f[0].empty() || res.ec != std::errc() || res.ptr != f[0].data() + f[0].size()) {
      throw CsvError(where + ": bad step '" + f[0] + "'");
    }
    if (!rows.empty() && step <= rows.back().step) throw CsvError(where + ": steps not increasing");
    r.step = step;
    r.loss_smoothed = parse_double_field(f[1], where);
    r.loss_raw = parse_double_field(f[2], where);
    const bool has_eval = !f[3].empty() || !f[4].empty() || !f[5].empty();
    if (has_eval) {
      r.metrics = EvalMetrics{parse_double_field(f[3], where), parse_double_field(f[4], where),
                              parse_double_field(f[5], where)};
    }
    rows.push_back(r);
  }
  if (lineno == 0) throw CsvError(origin + ":1: empty file");
  return rows;
}

std::vector<MetricsRow> read_convergence_csv(const fs::path& path) {
  if (!fs::exists(path)) throw CsvError(path.string() + ": no such file");
  const Bytes b = read_file(path);
  return parse_convergence_csv(std::string(b.begin(), b.end()), path.string());
}

std::string grid_csv(const std::vector<GridRow>& rows) {
  std::string out = std::string(kGridHeader) + "\n";
  for (const auto& r : rows) {
    out += r.variant + "," + std::to_string(r.seed) + "," + format_double(r.final_loss) + "," +
           format_double(r.metrics.edge_f1) + "," + format_double(r.metrics.mse) + "," +
           format_double(r.metrics.psnr) + ",";
    if (r.diverged) {
      out += "diverged";
    } else {
      out += r.steps_to_threshold ? std::to_string(*r.steps_to_threshold) : "inf";
    }
    out += "\n";
  }
  return out;
}

}  // namespace gatectl
