#include "csv_impl.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pdot/errors.hpp"

namespace pdot::detail {

std::string fmt_g10(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  f << content;
  if (!f) throw IoError("write to \"" + path + "\" failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open \"" + path + "\"");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (k) f << ',';
    f << header[k];
  }
  f << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) f << ',';
      f << fmt_g10(rows(i, j));
    }
    f << '\n';
  }
  if (!f) throw IoError("write to \"" + path + "\" failed");
}

Eigen::MatrixXd read_csv(const std::string& path,
                         std::vector<std::string>* header) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open \"" + path + "\"");
  std::vector<std::vector<double>> data;
  std::string line;
  std::size_t ncols = 0;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (first) {
      first = false;
      char* end = nullptr;
      std::strtod(fields[0].c_str(), &end);
      const bool numeric = end != fields[0].c_str();
      if (!numeric) {
        if (header) *header = fields;
        ncols = fields.size();
        continue;
      }
    }
    if (ncols == 0) ncols = fields.size();
    if (fields.size() != ncols) {
      throw ParseError("\"" + path + "\": ragged row with " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(ncols));
    }
    std::vector<double> row(ncols);
    for (std::size_t k = 0; k < ncols; ++k) {
      char* end = nullptr;
      row[k] = std::strtod(fields[k].c_str(), &end);
      if (end == fields[k].c_str() || *end != '\0') {
        throw ParseError("\"" + path + "\": field \"" + fields[k] +
                         "\" is not a number");
      }
    }
    data.push_back(std::move(row));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()),
                      static_cast<Eigen::Index>(ncols));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < ncols; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          data[i][j];
    }
  }
  return out;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory \"" + path + "\": " + ec.message());
}

}  // namespace pdot::detail
