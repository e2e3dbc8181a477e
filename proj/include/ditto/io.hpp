#pragma once

// Plain-text persistence: key=value config files, CSV tables, and the
// target/curve file formats consumed by the CLI.

#include <map>
#include <string>
#include <vector>

#include "ditto/tensor.hpp"

namespace ditto::io {

// key=value per line; '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> read_config(const std::string& path);
std::map<std::string, std::string> parse_config(const std::string& text);

int config_int(const std::map<std::string, std::string>& cfg, const std::string& key, int fallback);
double config_double(const std::map<std::string, std::string>& cfg, const std::string& key,
                     double fallback);
std::string config_str(const std::map<std::string, std::string>& cfg, const std::string& key,
                       const std::string& fallback);

// Generic CSV: a header line then one comma-separated row per entry.
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows);
void append_csv_row(const std::string& path, const std::string& header,
                    const std::vector<std::string>& fields);

// Matrix as CSV rows (no header); loader infers shape, requires rectangular.
void save_matrix_csv(const std::string& path, const Tensor& m);
Tensor load_matrix_csv(const std::string& path);

// Intensity curve: "frame,db" with header, one row per frame.
void save_intensity_csv(const std::string& path, const Tensor& curve);
Tensor load_intensity_csv(const std::string& path, int frames);

// Melody: "frame,class" with header, classes 1..12.
void save_melody_csv(const std::string& path, const std::vector<int>& classes);
std::vector<int> load_melody_csv(const std::string& path, int frames);

// Embedding: one value per line.
void save_vector(const std::string& path, const Tensor& v);
Tensor load_vector(const std::string& path);

}  // namespace ditto::io
