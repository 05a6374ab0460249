#pragma once

// Sectioned `key = value` text documents: volume headers, configs, reports,
// transforms and completeness ratings all share this format.

#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vict/geometry.hpp"

namespace vict {

using KeyValueTree = boost::property_tree::ptree;

/// Parses a file; throws InputError (missing file) or ParseError.
KeyValueTree read_keyvalue_file(const std::filesystem::path& path);
KeyValueTree parse_keyvalue(const std::string& text);

/// Whitespace-separated reals of exactly `n` entries.
std::vector<double> get_reals(const KeyValueTree& t, const std::string& key, std::size_t n);
std::vector<long long> get_ints(const KeyValueTree& t, const std::string& key, std::size_t n);
Vec3 get_vec3(const KeyValueTree& t, const std::string& key);
std::string get_string(const KeyValueTree& t, const std::string& key);

/// Shortest text that round-trips a double exactly.
std::string format_real(double v);

/// Ordered `key = value` writer with `[section]` headers.
class KeyValueWriter {
 public:
  void section(const std::string& name);
  void put(const std::string& key, const std::string& value);
  void put(const std::string& key, double value);
  void put(const std::string& key, long long value);
  void put(const std::string& key, int value) { put(key, static_cast<long long>(value)); }
  void put(const std::string& key, std::size_t value) { put(key, static_cast<long long>(value)); }
  void put(const std::string& key, bool value);
  void put(const std::string& key, const Vec3& v);
  void put_reals(const std::string& key, const std::vector<double>& v);

  const std::string& text() const { return text_; }
  void write(const std::filesystem::path& path) const;

 private:
  std::string text_;
};

}  // namespace vict
