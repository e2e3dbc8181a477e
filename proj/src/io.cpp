#include "ditto/io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ditto::io {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string read_all(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("io: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    return out;
}

std::ofstream open_out(const std::string& path, bool append = false) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot write " + path);
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
    std::map<std::string, std::string> cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("io: config line " + std::to_string(lineno) +
                                     " is not key=value: " + line);
        cfg[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
}

std::map<std::string, std::string> read_config(const std::string& path) {
    return parse_config(read_all(path));
}

int config_int(const std::map<std::string, std::string>& cfg, const std::string& key,
               int fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : std::stoi(it->second);
}

double config_double(const std::map<std::string, std::string>& cfg, const std::string& key,
                     double fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : std::stod(it->second);
}

std::string config_str(const std::map<std::string, std::string>& cfg, const std::string& key,
                       const std::string& fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
    auto out = open_out(path);
    out.precision(17);
    out << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

void append_csv_row(const std::string& path, const std::string& header,
                    const std::vector<std::string>& fields) {
    bool fresh = !std::ifstream(path).good();
    auto out = open_out(path, true);
    if (fresh) out << header << '\n';
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
}

void save_matrix_csv(const std::string& path, const Tensor& m) {
    auto out = open_out(path);
    out.precision(17);
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m.at(r, c);
        out << '\n';
    }
}

Tensor load_matrix_csv(const std::string& path) {
    std::istringstream is(read_all(path));
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        std::vector<double> row;
        for (const auto& f : split(line, ',')) row.push_back(std::stod(f));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("io: ragged matrix in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("io: empty matrix in " + path);
    Tensor m({static_cast<int>(rows.size()), static_cast<int>(rows.front().size())});
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m.at(r, c) = rows[r][c];
    return m;
}

void save_intensity_csv(const std::string& path, const Tensor& curve) {
    auto out = open_out(path);
    out.precision(17);
    out << "frame,db\n";
    for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << curve[i] << '\n';
}

Tensor load_intensity_csv(const std::string& path, int frames) {
    std::istringstream is(read_all(path));
    std::string line;
    std::getline(is, line);  // header
    Tensor curve({frames, 1});
    int seen = 0;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 2) throw std::runtime_error("io: bad intensity row in " + path);
        int frame = std::stoi(f[0]);
        if (frame < 0 || frame >= frames)
            throw std::runtime_error("io: intensity frame out of range in " + path);
        curve[frame] = std::stod(f[1]);
        ++seen;
    }
    if (seen != frames)
        throw std::runtime_error("io: expected " + std::to_string(frames) + " intensity rows in " +
                                 path);
    return curve;
}

void save_melody_csv(const std::string& path, const std::vector<int>& classes) {
    auto out = open_out(path);
    out << "frame,class\n";
    for (std::size_t i = 0; i < classes.size(); ++i) out << i << ',' << classes[i] << '\n';
}

std::vector<int> load_melody_csv(const std::string& path, int frames) {
    std::istringstream is(read_all(path));
    std::string line;
    std::getline(is, line);  // header
    std::vector<int> classes(frames, 0);
    int seen = 0;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 2) throw std::runtime_error("io: bad melody row in " + path);
        int frame = std::stoi(f[0]);
        if (frame < 0 || frame >= frames)
            throw std::runtime_error("io: melody frame out of range in " + path);
        classes[frame] = std::stoi(f[1]);
        ++seen;
    }
    if (seen != frames)
        throw std::runtime_error("io: expected " + std::to_string(frames) + " melody rows in " +
                                 path);
    return classes;
}

void save_vector(const std::string& path, const Tensor& v) {
    auto out = open_out(path);
    out.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) out << v[i] << '\n';
}

Tensor load_vector(const std::string& path) {
    std::istringstream is(read_all(path));
    std::string line;
    std::vector<double> vals;
    while (std::getline(is, line)) {
        line = trim(line);
        if (!line.empty()) vals.push_back(std::stod(line));
    }
    if (vals.empty()) throw std::runtime_error("io: empty vector in " + path);
    Tensor v({static_cast<int>(vals.size()), 1});
    std::copy(vals.begin(), vals.end(), v.data());
    return v;
}

}  // namespace ditto::io
