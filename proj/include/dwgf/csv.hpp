#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/errors.hpp"

// Minimal CSV I/O. Numbers are written with 17 significant digits via
// std::to_chars, which ignores the global locale.
namespace dwgf::csv {

inline std::string format(double v) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

class Writer {
public:
  Writer(const std::filesystem::path &path, const std::vector<std::string> &header)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_)
      throw std::runtime_error("cannot open " + path.string() + " for writing");
    row(header);
  }

  void row(const std::vector<std::string> &fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k)
        out_ << ',';
      out_ << fields[k];
    }
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_)
      throw std::runtime_error("error while writing " + path_.string());
  }

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// One row per matrix row; columns named prefix0, prefix1, ...
inline void write_matrix(const std::filesystem::path &path,
                         const Eigen::MatrixXd &m, const std::string &prefix) {
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    header.push_back(prefix + std::to_string(j));
  Writer w(path, header);
  std::vector<std::string> fields(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      fields[static_cast<std::size_t>(j)] = format(m(i, j));
    w.row(fields);
  }
  w.close();
}

inline bool parse_number(std::string_view tok, double &out) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t'))
    tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' ||
                          tok.back() == '\r'))
    tok.remove_suffix(1);
  if (!tok.empty() && tok.front() == '+')
    tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

/// Reads a vector stored as one column or one row. A non-numeric first line
/// is taken as the header.
inline Eigen::VectorXd read_vector(const std::filesystem::path &path,
                                   const std::string &field) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError(field + ": cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r")
      continue;
    std::vector<double> row;
    bool numeric = true;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      double v;
      if (!parse_number(tok, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError(field + ": non-numeric entry in " + path.string());
    }
    first = false;
    values.insert(values.end(), row.begin(), row.end());
  }
  if (values.empty())
    throw ConfigError(field + ": no values in " + path.string());
  return Eigen::Map<Eigen::VectorXd>(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
}

} // namespace dwgf::csv
