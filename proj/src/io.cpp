#include "hdspc/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifndef HDSPC_VERSION
#define HDSPC_VERSION "0.0.0"
#endif

namespace hdspc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string located(const std::string& source, std::size_t line, const std::string& msg) {
    return source + ":" + std::to_string(line) + ": " + msg;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::string iso_time_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace

double parse_double(const std::string& token, const std::string& where) {
    const std::string t = trim(token);
    if (t.empty()) throw DataError(where + ": empty value");
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+') ++first;
    double v = 0.0;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw DataError(where + ": not a number: '" + t + "'");
    if (!std::isfinite(v)) throw DataError(where + ": non-finite value '" + t + "'");
    return v;
}

CsvTable read_csv(std::istream& in, bool header, const std::string& source) {
    CsvTable table;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    bool header_pending = header;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (header_pending) {
            header_pending = false;
            table.header = cells;
            width = cells.size();
            // A header made only of numbers almost certainly means the flag is wrong.
            const bool numeric = std::all_of(cells.begin(), cells.end(), [](const std::string& c) {
                double v;
                const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
                return !c.empty() && r.ec == std::errc() && r.ptr == c.data() + c.size();
            });
            if (numeric) throw DataError(located(source, lineno, "header expected but the line is numeric"));
            continue;
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw DataError(located(source, lineno,
                                    "expected " + std::to_string(width) + " fields, found " +
                                        std::to_string(cells.size())));
        std::vector<double> row(width);
        for (std::size_t j = 0; j < width; ++j)
            row[j] = parse_double(cells[j], located(source, lineno, "column " + std::to_string(j + 1)));
        rows.push_back(std::move(row));
        table.lines.push_back(lineno);
    }
    if (rows.empty()) throw DataError(source + ": no data rows");
    table.data.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) table.data(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return table;
}

CsvTable read_csv_file(const std::filesystem::path& path, bool header) {
    auto in = open_input(path);
    return read_csv(in, header, path.string());
}

Matrix read_pgm(std::istream& in, const std::string& source) {
    // Tokens with '#' comments stripped; track the line of each token for errors.
    std::vector<std::pair<std::string, std::size_t>> tokens;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) tokens.emplace_back(tok, lineno);
    }
    if (tokens.empty() || tokens[0].first != "P2") throw DataError(source + ": not a plain PGM (P2) file");
    if (tokens.size() < 4) throw DataError(source + ": truncated PGM header");
    auto header_int = [&](std::size_t i, const char* what) {
        const double v = parse_double(tokens[i].first, located(source, tokens[i].second, what));
        if (v < 1 || v != std::floor(v)) throw DataError(located(source, tokens[i].second, std::string(what) + " must be a positive integer"));
        return static_cast<Index>(v);
    };
    const Index width = header_int(1, "width");
    const Index height = header_int(2, "height");
    const Index maxval = header_int(3, "maxval");
    const auto expected = static_cast<std::size_t>(width * height);
    if (tokens.size() - 4 != expected)
        throw DataError(source + ": expected " + std::to_string(expected) + " pixels, found " +
                        std::to_string(tokens.size() - 4));
    Matrix img(height, width);
    for (std::size_t k = 0; k < expected; ++k) {
        const auto& [tok, ln] = tokens[k + 4];
        const double v = parse_double(tok, located(source, ln, "pixel"));
        if (v < 0 || v > static_cast<double>(maxval))
            throw DataError(located(source, ln, "pixel value out of [0, maxval]"));
        img(static_cast<Index>(k) / width, static_cast<Index>(k) % width) = v;
    }
    return img;
}

Matrix read_pgm_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_pgm(in, path.string());
}

void write_pgm(std::ostream& out, const Matrix& image, int maxval) {
    out << "P2\n" << image.cols() << ' ' << image.rows() << '\n' << maxval << '\n';
    for (Index i = 0; i < image.rows(); ++i) {
        for (Index j = 0; j < image.cols(); ++j) {
            const double v = std::clamp(std::round(image(i, j)), 0.0, static_cast<double>(maxval));
            out << (j ? " " : "") << static_cast<int>(v);
        }
        out << '\n';
    }
}

Matrix read_image_matrix(const std::filesystem::path& path, bool header) {
    auto in = open_input(path);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    in.clear();
    in.seekg(0);
    if (magic == "P2") return read_pgm(in, path.string());
    return read_csv(in, header, path.string()).data;
}

void write_csv(std::ostream& out, const Matrix& data, const std::vector<std::string>& header) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    if (!header.empty()) out << '\n';
    for (Index i = 0; i < data.rows(); ++i) {
        for (Index j = 0; j < data.cols(); ++j) out << (j ? "," : "") << shortest(data(i, j));
        out << '\n';
    }
}

void write_chart_csv(std::ostream& out, const std::vector<ChartPoint>& points, double r0, bool contributions) {
    out << "t,R,R0,alarm";
    if (contributions && !points.empty())
        for (Index j = 0; j < points.front().contributions.size(); ++j) out << ",c" << j + 1;
    out << '\n';
    for (const auto& pt : points) {
        out << pt.t << ',' << shortest(pt.r) << ',' << shortest(r0) << ',' << (pt.alarm ? 1 : 0);
        if (contributions)
            for (Index j = 0; j < pt.contributions.size(); ++j) out << ',' << shortest(pt.contributions[j]);
        out << '\n';
    }
}

void write_pca_chart_csv(std::ostream& out, const std::vector<PcaChartRow>& rows, const PcaChartLimits& limits) {
    out << "t,T2,Q,T2_limit,Q_limit,alarm\n";
    for (const auto& r : rows)
        out << r.t << ',' << shortest(r.point.t2) << ',' << shortest(r.point.q) << ',' << shortest(limits.t2) << ','
            << shortest(limits.q) << ',' << (r.point.alarm ? 1 : 0) << '\n';
}

KeyValues read_key_values(std::istream& in, const std::string& source) {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError(located(source, lineno, "expected key = value"));
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw DataError(located(source, lineno, "empty key"));
        if (kv.count(key)) throw DataError(located(source, lineno, "duplicate key '" + key + "'"));
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_key_values_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_key_values(in, path.string());
}

std::vector<double> parse_double_list(const std::string& value, const std::string& where) {
    std::vector<double> out;
    for (const auto& cell : split(value, ',')) out.push_back(parse_double(cell, where));
    if (out.empty()) throw DataError(where + ": empty list");
    return out;
}

nlohmann::json make_manifest(const std::string& command, const nlohmann::json& parameters,
                             const std::vector<std::filesystem::path>& inputs,
                             const std::vector<std::filesystem::path>& outputs) {
    nlohmann::json in = nlohmann::json::array(), out = nlohmann::json::array();
    for (const auto& p : inputs) in.push_back(p.string());
    for (const auto& p : outputs) out.push_back(p.string());
    return {{"command", command},  {"parameters", parameters}, {"inputs", in},
            {"outputs", out},      {"tool", "hdspc"},          {"version", HDSPC_VERSION},
            {"created", iso_time_now()}};
}

void write_manifest(const std::filesystem::path& output, const nlohmann::json& manifest) {
    write_text_file(output.string() + ".manifest.json", manifest.dump(2) + "\n");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace hdspc
