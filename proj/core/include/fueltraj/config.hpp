#pragma once

// Minimal structured-text config reader: `[section]` headers, `key = value`
// pairs, `#` comments, repeated keys forming lists of rows. Used by the
// vehicle parameter file, the track generator spec, and scenario files.

#include <string>
#include <vector>

namespace fueltraj {

class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text,
                                 const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;

  // Scalar getters; the defaulted forms fall back when the key is absent.
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  int get_int(const std::string& section, const std::string& key,
              int fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;

  // Comma-separated numbers from a single occurrence of `key`.
  std::vector<double> get_list(const std::string& section,
                               const std::string& key) const;
  // One numeric row per occurrence of `key` (e.g. repeated `corner = ...`).
  std::vector<std::vector<double>> get_rows(const std::string& section,
                                            const std::string& key) const;

  struct Entry {
    std::string section, key, value;
    int line = 0;
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  const Entry* find(const std::string& section, const std::string& key) const;

  std::vector<Entry> entries_;
  std::string origin_;
};

}  // namespace fueltraj
