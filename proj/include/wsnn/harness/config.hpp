#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace wsnn::harness {

// Flat experiment configuration: every setting is a known key with a
// default, a config file supplies `key = value` lines (# comments allowed),
// and any key can be overridden by a --key value CLI flag. Unknown keys are
// configuration errors, both in files and on the command line.
class Config {
 public:
  // key -> default value (as text). The single source of truth for which
  // keys exist.
  static const std::map<std::string, std::string>& defaults();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  double number(const std::string& key) const;
  bool flag(const std::string& key) const;  // true/false/1/0/yes/no

  // Canonical sorted `key = value` listing of the effective configuration.
  std::string dump() const;
  // Stable FNV-1a hash of dump(), as 16 hex digits; names run artifacts and
  // ties checkpoints to the configuration that produced them.
  std::string hash() const;

 private:
  std::map<std::string, std::string> overrides_;
};

}  // namespace wsnn::harness
