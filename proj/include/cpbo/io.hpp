#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpbo {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Seed and configuration digest written as the first comment line of every
/// artifact: `# seed=<seed> config_hash=<hex>`.
struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
};

void write_provenance(std::ostream& os, const std::optional<Provenance>& prov);

/// 64-bit FNV-1a digest rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// One parsed CSV row with its 1-based line number in the source file.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
};

/// Reads a comma-separated file; blank lines and lines starting with '#' are
/// skipped. The first remaining line is the header.
CsvTable read_csv(std::istream& is);
CsvTable read_csv_file(const std::string& path);

/// Parses a full field as a double; throws ParseError naming the line.
double parse_double(std::string_view field, std::size_t line);
long long parse_int(std::string_view field, std::size_t line);

std::vector<std::string> split(std::string_view text, char sep);

/// Throws ParseError unless `table.header` equals `expected` exactly.
void require_header(const CsvTable& table, const std::vector<std::string>& expected,
                    std::string_view what);

}  // namespace cpbo
