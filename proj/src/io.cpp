/* Copyright 2026 The Copsel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "copsel/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "copsel/errors.hpp"
#include "format.hpp"

namespace copsel {
namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

long parse_int(const std::string& s, std::size_t line) {
  long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("csv line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(what + ": truncated header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::ifstream open_binary(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  return in;
}

}  // namespace

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t d = ds.dim();
  for (std::size_t i = 0; i < d; ++i) out << "x_" << i + 1 << ',';
  out << 'y';
  if (ds.has_truth()) out << ",relevant";
  out << '\n';
  const auto& v = ds.x.data();
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      out << format_double(v[r * d + i]) << ',';
    }
    out << ds.y[r];
    if (ds.has_truth()) {
      out << ',';
      for (std::size_t k = 0; k < ds.relevant[r].size(); ++k) {
        if (k) out << '|';
        out << ds.relevant[r][k] + 1;
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: empty file " + path.string());
  strip_cr(line);
  const std::vector<std::string> header = split(line, ',');
  std::size_t d = 0;
  while (d < header.size() && header[d] == "x_" + std::to_string(d + 1)) ++d;
  if (d == 0 || d >= header.size() || header[d] != "y") {
    throw FormatError("csv: header must be x_1..x_d,y[,relevant]");
  }
  const bool truth = header.size() == d + 2 && header[d + 1] == "relevant";
  if (header.size() != d + 1 + (truth ? 1 : 0)) {
    throw FormatError("csv: unexpected columns after 'y'");
  }

  std::vector<double> values;
  Dataset ds;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw FormatError("csv line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " cells, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < d; ++i) values.push_back(parse_double(cells[i], lineno));
    const long y = parse_int(cells[d], lineno);
    if (y < 0) throw FormatError("csv line " + std::to_string(lineno) + ": negative label");
    ds.y.push_back(static_cast<int>(y));
    if (truth) {
      FeatureSet s;
      if (!cells[d + 1].empty()) {
        for (const std::string& idx : split(cells[d + 1], '|')) {
          const long i = parse_int(idx, lineno);
          if (i < 1 || static_cast<std::size_t>(i) > d) {
            throw FormatError("csv line " + std::to_string(lineno) +
                              ": relevant index out of range");
          }
          s.push_back(static_cast<std::size_t>(i - 1));
        }
      }
      ds.relevant.push_back(std::move(s));
    }
  }
  ds.x = Tensor(Shape{ds.y.size(), d}, std::move(values));
  int max_label = 1;
  for (int y : ds.y) max_label = std::max(max_label, y);
  ds.n_classes = static_cast<std::size_t>(max_label) + 1;
  ds.validate();
  return ds;
}

Dataset parse_idx(const std::filesystem::path& images,
                  const std::filesystem::path& labels) {
  std::ifstream img = open_binary(images);
  std::ifstream lab = open_binary(labels);
  const std::uint32_t img_magic = read_be32(img, images.string());
  if (img_magic != 0x00000803u) {
    throw FormatError(images.string() + ": bad magic, expected 0x00000803 (images)");
  }
  const std::uint32_t lab_magic = read_be32(lab, labels.string());
  if (lab_magic != 0x00000801u) {
    throw FormatError(labels.string() + ": bad magic, expected 0x00000801 (labels)");
  }
  const std::size_t n = read_be32(img, images.string());
  const std::size_t rows = read_be32(img, images.string());
  const std::size_t cols = read_be32(img, images.string());
  const std::size_t n_labels = read_be32(lab, labels.string());
  if (n != n_labels) {
    throw FormatError("idx: " + std::to_string(n) + " images but " +
                      std::to_string(n_labels) + " labels");
  }
  const std::size_t d = rows * cols;
  std::vector<unsigned char> pixels(n * d);
  if (!img.read(reinterpret_cast<char*>(pixels.data()),
                static_cast<std::streamsize>(pixels.size()))) {
    throw FormatError(images.string() + ": truncated pixel data");
  }
  std::vector<unsigned char> ys(n);
  if (!lab.read(reinterpret_cast<char*>(ys.data()), static_cast<std::streamsize>(n))) {
    throw FormatError(labels.string() + ": truncated label data");
  }
  Dataset ds;
  ds.n_classes = 10;
  ds.x = Tensor(Shape{n, d});
  auto v = ds.x.data();
  for (std::size_t k = 0; k < pixels.size(); ++k) v[k] = pixels[k] / 255.0;
  ds.y.assign(ys.begin(), ys.end());
  ds.validate();
  return ds;
}

}  // namespace copsel
