#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace actbench {

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// Comma-separated writer. Fields are written verbatim; callers keep them
/// free of commas and quotes.
class CsvWriter {
 public:
  /// Creates parent directories. Throws std::runtime_error naming the path
  /// if the file cannot be opened.
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& fields);
  /// Flushes and throws on a write failure.
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

/// Rows of a CSV file written by CsvWriter, header first.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

/// Creates parent directories; a failed write throws with the path.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace actbench
