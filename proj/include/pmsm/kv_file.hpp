#pragma once

#include <map>
#include <string>
#include <vector>

// Sectioned key = value files ("[section]" headers, '#' or ';' comments).
namespace pmsm::kv {

struct Section {
  std::string name;  // empty for keys before the first header
  std::map<std::string, std::string> values;
};

struct Document {
  std::vector<Section> sections;

  const Section* find(const std::string& name) const;
};

// Throws ValidationError on syntax errors, duplicate sections or duplicate keys.
Document parse(const std::string& text);
std::string write(const Document& doc);

double parse_double(const std::string& text, const std::string& key);
long long parse_int(const std::string& text, const std::string& key);
// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace pmsm::kv
