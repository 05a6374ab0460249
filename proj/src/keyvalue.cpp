#include "vict/keyvalue.hpp"

#include <boost/property_tree/ini_parser.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

#include "vict/error.hpp"

namespace vict {

namespace {

KeyValueTree parse_stream(std::istream& in) {
  KeyValueTree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  return tree;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

KeyValueTree read_keyvalue_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return parse_stream(in);
  } catch (const ParseError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

KeyValueTree parse_keyvalue(const std::string& text) {
  std::istringstream in(text);
  return parse_stream(in);
}

std::string get_string(const KeyValueTree& t, const std::string& key) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) throw InputError("missing key '" + key + "'");
  return *v;
}

std::vector<double> get_reals(const KeyValueTree& t, const std::string& key, std::size_t n) {
  const auto toks = split_ws(get_string(t, key));
  if (toks.size() != n) {
    throw InputError("key '" + key + "' expects " + std::to_string(n) + " values");
  }
  std::vector<double> out;
  for (const auto& tok : toks) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw InputError("key '" + key + "': not a number: " + tok);
    }
    out.push_back(v);
  }
  return out;
}

std::vector<long long> get_ints(const KeyValueTree& t, const std::string& key, std::size_t n) {
  const auto toks = split_ws(get_string(t, key));
  if (toks.size() != n) {
    throw InputError("key '" + key + "' expects " + std::to_string(n) + " values");
  }
  std::vector<long long> out;
  for (const auto& tok : toks) {
    long long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw InputError("key '" + key + "': not an integer: " + tok);
    }
    out.push_back(v);
  }
  return out;
}

Vec3 get_vec3(const KeyValueTree& t, const std::string& key) {
  const auto v = get_reals(t, key, 3);
  return {v[0], v[1], v[2]};
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void KeyValueWriter::section(const std::string& name) {
  if (!text_.empty()) text_ += '\n';
  text_ += "[" + name + "]\n";
}

void KeyValueWriter::put(const std::string& key, const std::string& value) {
  text_ += key + " = " + value + "\n";
}

void KeyValueWriter::put(const std::string& key, double value) { put(key, format_real(value)); }

void KeyValueWriter::put(const std::string& key, long long value) {
  put(key, std::to_string(value));
}

void KeyValueWriter::put(const std::string& key, bool value) {
  put(key, std::string(value ? "true" : "false"));
}

void KeyValueWriter::put(const std::string& key, const Vec3& v) {
  put_reals(key, {v[0], v[1], v[2]});
}

void KeyValueWriter::put_reals(const std::string& key, const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_real(v[i]);
  }
  put(key, s);
}

void KeyValueWriter::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text_;
  if (!out) throw InputError("write failed: " + path.string());
}

}  // namespace vict
