// sde/csv.hpp

// Copyright 2026  The sdelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SDE_CSV_HPP_
#define SDE_CSV_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace sde {

// RFC 4180 table: the first row is the header. Quoted fields may contain
// commas, doubled quotes and newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name, or -1.
  int Column(const std::string& name) const;
  // Column index by name; throws InvalidInput naming `context` if absent.
  int RequireColumn(const std::string& name, const std::string& context) const;
};

CsvTable ParseCsv(const std::string& text);
CsvTable ReadCsv(const std::filesystem::path& path);
std::string FormatCsv(const CsvTable& table);

// Quotes a field only when it needs it.
std::string CsvField(const std::string& value);

// Shortest text that parses back to the same double; "inf", "-inf", "nan"
// for the non-finite values.
std::string FormatDouble(double v);
// Inverse of FormatDouble. Throws InvalidInput naming `context`.
double ParseDouble(const std::string& text, const std::string& context);

}  // namespace sde

#endif  // SDE_CSV_HPP_
