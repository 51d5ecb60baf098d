#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace sisc::cli {

struct OptionSpec {
  std::string key;  // also the flag name, with '_' spelled '-'
  std::string fallback;  // empty means unset
  std::string help;
};

// Command-scoped `key = value` settings resolved as
// defaults < config file < command-line flags.
class RunConfig {
 public:
  RunConfig(std::string command, std::vector<OptionSpec> specs);

  const std::string& command() const { return command_; }
  const std::vector<OptionSpec>& specs() const { return specs_; }

  // Unknown keys are a ConfigError.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;       // resolved to a non-empty value
  bool explicit_set(const std::string& key) const;  // from the file or a flag

  std::string text(const std::string& key) const;  // ConfigError when unset
  double real(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;  // comma separated

  // Resolved settings, sorted by key; unset keys are omitted.
  std::string echo() const;
  void write_echo(const std::filesystem::path& dir) const;

 private:
  const OptionSpec& spec(const std::string& key) const;

  std::string command_;
  std::vector<OptionSpec> specs_;
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

}  // namespace sisc::cli
