#include <map>
#include <sstream>

#include "sisc/io.hpp"
#include "sisc/sequencer.hpp"

namespace sisc {

SequencerConfig SequencerConfig::standard() {
  SequencerConfig c;
  c.cells = {CellConfig{16, 3, 0.25, 0.99, 3}, CellConfig{32, 3, 0.25, 0.99, 3},
             CellConfig{64, 3, 0.25, 0.99, 3}};
  c.final_cell = CellConfig{128, 3, 0.25, 0.99, 1};
  return c;
}

std::size_t SequencerConfig::pooled_size() const {
  std::size_t s = input_size;
  for (std::size_t i = 0; i < cells.size(); ++i) s /= 2;
  return s;
}

namespace {

void check_cell(const CellConfig& cell, const std::string& name, bool final,
                std::vector<std::string>& out) {
  if (!final && cell.conv_count < 1) out.push_back(name + ": conv_count must be at least 1");
  if (cell.conv_count > 0) {
    if (cell.channels < 1) out.push_back(name + ": channels must be at least 1");
    if (cell.kernel < 1 || cell.kernel % 2 == 0) {
      out.push_back(name + ": kernel " + std::to_string(cell.kernel) +
                    " must be odd so same padding is exact");
    }
  }
  if (!(cell.dropout_rate >= 0.0 && cell.dropout_rate < 1.0)) {
    out.push_back(name + ": dropout_rate must lie in [0, 1)");
  }
  if (!(cell.bn_momentum > 0.0 && cell.bn_momentum < 1.0)) {
    out.push_back(name + ": bn_momentum must lie in (0, 1)");
  }
}

}  // namespace

std::vector<std::string> SequencerConfig::violations() const {
  std::vector<std::string> out;
  if (input_size < 1) out.push_back("input_size must be positive");
  if (input_channels < 1) out.push_back("input_channels must be positive");
  if (class_count < 1) out.push_back("class_count must be positive");
  if (!(bn_epsilon > 0.0)) out.push_back("bn_epsilon must be positive");
  if (cells.size() >= 63 || input_size % (std::size_t{1} << cells.size()) != 0) {
    out.push_back("input_size " + std::to_string(input_size) + " is not divisible by 2^" +
                  std::to_string(cells.size()) + " (one 2x2 pool per cell)");
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    check_cell(cells[i], "cell " + std::to_string(i), false, out);
  }
  check_cell(final_cell, "final cell", true, out);
  return out;
}

void SequencerConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid sequencer configuration:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

namespace {

void write_cell(std::ostringstream& os, const std::string& prefix, const CellConfig& c) {
  os << prefix << ".channels = " << c.channels << '\n'
     << prefix << ".kernel = " << c.kernel << '\n'
     << prefix << ".conv_count = " << c.conv_count << '\n'
     << prefix << ".dropout_rate = " << io::format_double(c.dropout_rate) << '\n'
     << prefix << ".bn_momentum = " << io::format_double(c.bn_momentum) << '\n';
}

std::size_t to_size(const std::string& key, const std::string& v, std::size_t line) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw ParseError("line " + std::to_string(line) + ": " + key + " expects a non-negative integer, got '" +
                         v + "'",
                     line);
  }
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v, std::size_t line) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) {
    throw ParseError("line " + std::to_string(line) + ": " + key + " expects a number, got '" + v + "'",
                     line);
  }
  return x;
}

}  // namespace

std::string SequencerConfig::to_text() const {
  std::ostringstream os;
  os << "input_size = " << input_size << '\n'
     << "input_channels = " << input_channels << '\n'
     << "class_count = " << class_count << '\n'
     << "bn_epsilon = " << io::format_double(bn_epsilon) << '\n'
     << "cells = " << cells.size() << '\n';
  for (std::size_t i = 0; i < cells.size(); ++i) write_cell(os, "cell." + std::to_string(i), cells[i]);
  write_cell(os, "final", final_cell);
  return os.str();
}

SequencerConfig SequencerConfig::from_text(const std::string& text) {
  std::map<std::string, io::KeyValue> kv;
  for (auto& entry : io::parse_key_values(text)) {
    if (kv.count(entry.key)) {
      throw ParseError("line " + std::to_string(entry.line) + ": duplicate key " + entry.key, entry.line);
    }
    kv[entry.key] = entry;
  }
  auto take = [&](const std::string& key) -> io::KeyValue {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("missing key " + key, 0);
    io::KeyValue v = it->second;
    kv.erase(it);
    return v;
  };
  auto size_of = [&](const std::string& key) {
    const auto v = take(key);
    return to_size(key, v.value, v.line);
  };
  auto double_of = [&](const std::string& key) {
    const auto v = take(key);
    return to_double(key, v.value, v.line);
  };
  auto cell_of = [&](const std::string& prefix) {
    CellConfig c;
    c.channels = size_of(prefix + ".channels");
    c.kernel = size_of(prefix + ".kernel");
    c.conv_count = size_of(prefix + ".conv_count");
    c.dropout_rate = double_of(prefix + ".dropout_rate");
    c.bn_momentum = double_of(prefix + ".bn_momentum");
    return c;
  };

  SequencerConfig c;
  c.input_size = size_of("input_size");
  c.input_channels = size_of("input_channels");
  c.class_count = size_of("class_count");
  c.bn_epsilon = double_of("bn_epsilon");
  const std::size_t n = size_of("cells");
  if (n > 62) throw ParseError("cell count " + std::to_string(n) + " is implausible", 0);
  c.cells.clear();
  for (std::size_t i = 0; i < n; ++i) c.cells.push_back(cell_of("cell." + std::to_string(i)));
  c.final_cell = cell_of("final");
  if (!kv.empty()) {
    const auto& extra = kv.begin()->second;
    throw ParseError("line " + std::to_string(extra.line) + ": unknown key " + extra.key, extra.line);
  }
  return c;
}

namespace {

std::size_t stage_params(std::size_t cin, std::size_t cout, std::size_t k) {
  return cout * cin * k * k + cout + 2 * cout;
}

}  // namespace

std::size_t parameter_count(const SequencerConfig& config) {
  std::size_t total = 0;
  std::size_t c = config.input_channels;
  auto add_cell = [&](const CellConfig& cell) {
    for (std::size_t j = 0; j < cell.conv_count; ++j) {
      total += stage_params(c, cell.channels, cell.kernel);
      c = cell.channels;
    }
  };
  for (const auto& cell : config.cells) add_cell(cell);
  add_cell(config.final_cell);
  total += config.class_count * c + config.class_count;
  return total;
}

std::size_t buffer_count(const SequencerConfig& config) {
  std::size_t total = 0;
  for (const auto& cell : config.cells) total += 2 * cell.channels * cell.conv_count;
  total += 2 * config.final_cell.channels * config.final_cell.conv_count;
  return total;
}

}  // namespace sisc
