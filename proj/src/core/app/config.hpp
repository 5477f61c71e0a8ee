#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sslseg::app {

enum class ValueType { kString, kInt, kUInt, kDouble, kPath };

struct KeySpec {
  std::string name;  // "section.key"
  ValueType type;
  std::string default_value;
  std::string help;
};

// Every accepted key. Sections: data, model, pretrain, finetune, report.
const std::vector<KeySpec>& schema();
const KeySpec* find_key(std::string_view name);

// Flat typed key/value configuration. Values are validated against the
// schema on every write; unknown keys raise ConfigError.
class Config {
 public:
  Config();
  // Defaults for the synthetic desk-scale pipeline.
  static Config smoke_preset();

  // INI file: [section] headers, key = value lines, ';' or '#' comments.
  void merge_file(const std::filesystem::path& path);
  void set(std::string_view name, std::string_view value);
  bool is_set(std::string_view name) const;  // differs from the schema default

  const std::string& raw(std::string_view name) const;
  std::string str(std::string_view name) const { return raw(name); }
  std::filesystem::path path(std::string_view name) const { return raw(name); }
  int integer(std::string_view name) const;
  std::uint64_t uinteger(std::string_view name) const;
  double real(std::string_view name) const;

  std::vector<std::string> keys() const;
  // INI rendering of every value, sections in schema order.
  std::string dump() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace sslseg::app
