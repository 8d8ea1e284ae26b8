#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace airfed {

// %.17g: enough digits to round-trip a double, so identical runs give
// byte-identical files.
std::string csv_num(double v);
std::string csv_num(int v);
std::string csv_num(std::int64_t v);

class CsvWriter {
 public:
  // comment goes out first as "# <comment>"; pass empty to skip.
  CsvWriter(std::string comment, std::vector<std::string> header);

  void add_row(std::vector<std::string> cells);
  std::string str() const;
  void write_file(const std::string& path) const;

 private:
  std::string comment_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace airfed
