#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pdot::detail {

// Shortest round-trippable-ish decimal: printf %.10g.
std::string fmt_g10(double v);

void write_text_file(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

// Header line then one %.10g row per matrix row.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows);

// Numeric CSV with an optional header line (detected by non-numeric first
// field). Returns the data; fills header when given.
Eigen::MatrixXd read_csv(const std::string& path,
                         std::vector<std::string>* header);

void ensure_dir(const std::string& path);

}  // namespace pdot::detail
