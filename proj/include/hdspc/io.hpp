#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdspc/monitoring.hpp"
#include "hdspc/pca_chart.hpp"
#include "hdspc/types.hpp"

namespace hdspc {

struct CsvTable {
    Matrix data;                     // rows = observations
    std::vector<std::string> header; // empty unless read with a header
    std::vector<std::size_t> lines;  // source line of each data row
};

/// Comma separated numbers, one observation per line. Numbers use '.' as the
/// decimal point regardless of locale; NaN and infinities are rejected.
/// Errors are DataError with "<source>:<line>: ..." messages. Blank lines are
/// skipped.
CsvTable read_csv(std::istream& in, bool header, const std::string& source = "<input>");
CsvTable read_csv_file(const std::filesystem::path& path, bool header);

/// Plain-text PGM (P2). Each image row becomes a matrix row.
Matrix read_pgm(std::istream& in, const std::string& source = "<input>");
Matrix read_pgm_file(const std::filesystem::path& path);
/// Values are rounded and clamped to [0, maxval].
void write_pgm(std::ostream& out, const Matrix& image, int maxval = 255);

/// PGM when the file starts with "P2", csv otherwise.
Matrix read_image_matrix(const std::filesystem::path& path, bool header);

void write_csv(std::ostream& out, const Matrix& data, const std::vector<std::string>& header = {});

/// t,R,R0,alarm then, optionally, c1..cp holding (d_j - nu)_+.
void write_chart_csv(std::ostream& out, const std::vector<ChartPoint>& points, double r0,
                     bool contributions);

struct PcaChartRow {
    std::int64_t t = 0;
    PcaChartPoint point;
};
/// t,T2,Q,T2_limit,Q_limit,alarm
void write_pca_chart_csv(std::ostream& out, const std::vector<PcaChartRow>& rows, const PcaChartLimits& limits);

/// Locale-independent double parser for a complete token. Throws DataError.
double parse_double(const std::string& token, const std::string& where);

/// key = value lines; '#' starts a comment. Keys are unique.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(std::istream& in, const std::string& source = "<config>");
KeyValues read_key_values_file(const std::filesystem::path& path);

/// Comma separated list of doubles ("0.05, 0.1").
std::vector<double> parse_double_list(const std::string& value, const std::string& where);

/// Reproducibility record stored next to each output file.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& parameters,
                             const std::vector<std::filesystem::path>& inputs,
                             const std::vector<std::filesystem::path>& outputs);
/// Writes <output>.manifest.json.
void write_manifest(const std::filesystem::path& output, const nlohmann::json& manifest);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace hdspc
