#include "pmsm/kv_file.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <sstream>

#include "pmsm/errors.hpp"

namespace pmsm::kv {

namespace pt = boost::property_tree;

const Section* Document::find(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

Document parse(const std::string& text) {
  // The boost reader only knows ';' comments.
  std::istringstream raw(text);
  std::ostringstream cleaned;
  for (std::string line; std::getline(raw, line);) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') line[first] = ';';
    cleaned << line << '\n';
  }

  pt::ptree tree;
  std::istringstream in(cleaned.str());
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config syntax: ") + e.what());
  }

  Document doc;
  Section root;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      root.values[key] = node.data();
      continue;
    }
    Section s;
    s.name = key;
    for (const auto& [k, v] : node) {
      if (!v.empty()) throw ValidationError("config: nested key '" + k + "' in [" + key + "]");
      s.values[k] = v.data();
    }
    doc.sections.push_back(std::move(s));
  }
  if (!root.values.empty()) doc.sections.insert(doc.sections.begin(), std::move(root));
  return doc;
}

std::string write(const Document& doc) {
  std::ostringstream out;
  bool first = true;
  for (const auto& s : doc.sections) {
    if (!first) out << '\n';
    first = false;
    if (!s.name.empty()) out << '[' << s.name << "]\n";
    for (const auto& [k, v] : s.values) out << k << " = " << v << '\n';
  }
  return out.str();
}

double parse_double(const std::string& text, const std::string& key) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError("config: '" + key + "' expects a finite number, got '" + text + "'");
  }
  return v;
}

long long parse_int(const std::string& text, const std::string& key) {
  long long v = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("config: '" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace pmsm::kv
