#include "fueltraj/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fueltraj/errors.hpp"

namespace fueltraj {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(raw, &used);
    if (trim(raw.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw InputError(where + ": expected a number, got '" + raw + "'");
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_string(text.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text,
                                    const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw InputError(origin + ":" + std::to_string(lineno) +
                         ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(origin + ":" + std::to_string(lineno) +
                       ": expected 'key = value'");
    }
    if (section.empty()) {
      throw InputError(origin + ":" + std::to_string(lineno) +
                       ": key outside any [section]");
    }
    Entry e;
    e.section = section;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    e.line = lineno;
    if (e.key.empty()) {
      throw InputError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_.push_back(std::move(e));
  }
  return cfg;
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section,
                                          const std::string& key) const {
  const Entry* hit = nullptr;
  for (const auto& e : entries_) {
    if (e.section == section && e.key == key) hit = &e;  // last wins
  }
  return hit;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

double ConfigFile::get_double(const std::string& section,
                              const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) {
    throw InputError(origin_ + ": missing required key [" + section + "] " +
                     key);
  }
  return parse_number(e->value,
                      origin_ + ":" + std::to_string(e->line) + " " + key);
}

double ConfigFile::get_double(const std::string& section,
                              const std::string& key, double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

int ConfigFile::get_int(const std::string& section, const std::string& key,
                        int fallback) const {
  if (!has(section, key)) return fallback;
  const double v = get_double(section, key);
  const int i = static_cast<int>(std::llround(v));
  if (std::abs(v - i) > 1e-9) {
    throw InputError(origin_ + ": key [" + section + "] " + key +
                     " must be an integer");
  }
  return i;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw InputError(origin_ + ":" + std::to_string(e->line) +
                   ": expected a boolean, got '" + e->value + "'");
}

std::string ConfigFile::get_string(const std::string& section,
                                   const std::string& key,
                                   const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

std::vector<double> ConfigFile::get_list(const std::string& section,
                                         const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return {};
  std::vector<double> out;
  std::istringstream in(e->value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number(
        item, origin_ + ":" + std::to_string(e->line) + " " + key));
  }
  return out;
}

std::vector<std::vector<double>> ConfigFile::get_rows(
    const std::string& section, const std::string& key) const {
  std::vector<std::vector<double>> rows;
  for (const auto& e : entries_) {
    if (e.section != section || e.key != key) continue;
    std::vector<double> row;
    std::istringstream in(e.value);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      row.push_back(parse_number(
          item, origin_ + ":" + std::to_string(e.line) + " " + key));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fueltraj
