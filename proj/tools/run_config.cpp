#include "run_config.hpp"

#include <cmath>
#include <sstream>

#include "sisc/error.hpp"
#include "sisc/io.hpp"

namespace sisc::cli {

RunConfig::RunConfig(std::string command, std::vector<OptionSpec> specs)
    : command_(std::move(command)), specs_(std::move(specs)) {
  for (const auto& s : specs_) values_[s.key] = s.fallback;
}

const OptionSpec& RunConfig::spec(const std::string& key) const {
  for (const auto& s : specs_) {
    if (s.key == key) return s;
  }
  throw ConfigError("'" + command_ + "' has no setting '" + key + "'");
}

void RunConfig::load_file(const std::filesystem::path& path) {
  for (const auto& kv : io::parse_key_values(io::read_text(path))) {
    std::string key = kv.key;
    for (char& c : key) c = c == '-' ? '_' : c;
    try {
      spec(key);
    } catch (const ConfigError&) {
      throw ConfigError(path.string() + " line " + std::to_string(kv.line) + ": '" + command_ +
                        "' has no setting '" + kv.key + "'");
    }
    set(key, kv.value);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  spec(key);
  values_[key] = value;
  explicit_.insert(key);
}

bool RunConfig::has(const std::string& key) const {
  spec(key);
  return !values_.at(key).empty();
}

bool RunConfig::explicit_set(const std::string& key) const { return explicit_.count(key) > 0; }

std::string RunConfig::text(const std::string& key) const {
  if (!has(key)) throw ConfigError("'" + command_ + "' needs --" + spec(key).key + " to be set");
  return values_.at(key);
}

double RunConfig::real(const std::string& key) const {
  const std::string v = text(key);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || !std::isfinite(out)) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string v = text(key);
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.front() == '-') {
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

std::size_t RunConfig::size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool RunConfig::flag(const std::string& key) const {
  const std::string v = has(key) ? values_.at(key) : "false";
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not true or false");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  std::istringstream in(values_.at(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  os << "# sisc " << command_ << ", resolved settings\n";
  for (const auto& [key, value] : values_) {
    if (!value.empty()) os << key << " = " << value << '\n';
  }
  return os.str();
}

void RunConfig::write_echo(const std::filesystem::path& dir) const {
  io::write_text(dir / "config.txt", echo());
}

}  // namespace sisc::cli
