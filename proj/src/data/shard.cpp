#include <charconv>
#include <sstream>

#include "sisc/data.hpp"
#include "sisc/io.hpp"

namespace sisc {

namespace {

constexpr const char* kShardFormat = "sisc-shard";
constexpr int kShardVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

void check_field(const std::string& text, const char* what) {
  if (text.find_first_of("\t\r\n") != std::string::npos) {
    throw DataError(std::string(what) + " '" + text + "' contains a tab or line break");
  }
}

std::size_t to_size(const std::string& s, const char* what) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw StructuralError(std::string("shard index field ") + what + " = '" + s + "' is not an integer");
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

void write_shard(const std::filesystem::path& prefix, const std::vector<NoduleSample>& samples) {
  std::size_t h = 0, w = 0;
  if (!samples.empty()) {
    h = samples.front().image.shape().h;
    w = samples.front().image.shape().w;
  }
  bool masks = !samples.empty();
  for (const auto& s : samples) {
    const Shape& sh = s.image.shape();
    if (sh != Shape{1, 1, h, w}) {
      throw DataError("shard samples must share one (1, 1, H, W) shape; got " + sh.str());
    }
    check_field(s.provenance.id, "sample id");
    check_field(s.provenance.root, "lineage root");
    check_field(s.provenance.lineage, "lineage");
    masks = masks && s.mask.has_value();
  }

  const std::size_t record = h * w * 4 + 1 + 4;
  std::vector<std::uint8_t> bin;
  bin.reserve(record * samples.size());
  std::vector<std::uint8_t> mask_bytes;
  std::ostringstream idx;
  idx << "format = " << kShardFormat << "\n"
      << "version = " << kShardVersion << "\n"
      << "count = " << samples.size() << "\n"
      << "height = " << h << "\n"
      << "width = " << w << "\n"
      << "record_bytes = " << record << "\n"
      << "masks = " << (masks ? 1 : 0) << "\n"
      << "---\n";
  for (const auto& s : samples) {
    idx << bin.size() << '\t' << static_cast<int>(s.label) << '\t' << s.score << '\t' << s.provenance.id
        << '\t' << s.provenance.root << '\t' << s.provenance.lineage << '\n';
    for (float v : s.image.data()) io::put_f32(bin, v);
    bin.push_back(static_cast<std::uint8_t>(s.label));
    io::put_i32(bin, s.score);
    if (masks) {
      if (s.mask->size() != h * w) throw DataError("mask of " + s.provenance.id + " has the wrong size");
      mask_bytes.insert(mask_bytes.end(), s.mask->begin(), s.mask->end());
    }
  }

  io::write_file(with_suffix(prefix, ".bin"), bin);
  io::write_text(with_suffix(prefix, ".idx"), idx.str());
  const auto mask_path = with_suffix(prefix, ".mask");
  if (masks) {
    io::write_file(mask_path, mask_bytes);
  } else if (std::filesystem::exists(mask_path)) {
    std::filesystem::remove(mask_path);
  }
}

std::vector<NoduleSample> read_shard(const std::filesystem::path& prefix) {
  const std::string idx = io::read_text(with_suffix(prefix, ".idx"));
  const std::size_t sep = idx.find("---\n");
  if (sep == std::string::npos) throw FormatError("shard index " + prefix.string() + ".idx has no '---' line");
  const auto header = io::parse_key_values(idx.substr(0, sep));
  auto value = [&](const char* key) -> const std::string& {
    for (const auto& kv : header) {
      if (kv.key == key) return kv.value;
    }
    throw StructuralError(std::string("shard index lacks '") + key + "'");
  };
  if (value("format") != kShardFormat) throw FormatError("not a shard index: " + prefix.string());
  if (to_size(value("version"), "version") != kShardVersion) {
    throw VersionError("unsupported shard version " + value("version"));
  }
  const std::size_t count = to_size(value("count"), "count");
  const std::size_t h = to_size(value("height"), "height");
  const std::size_t w = to_size(value("width"), "width");
  const std::size_t record = to_size(value("record_bytes"), "record_bytes");
  const bool masks = to_size(value("masks"), "masks") != 0;
  if (record != h * w * 4 + 1 + 4) throw StructuralError("shard record size disagrees with its extents");

  const auto bin = io::read_file(with_suffix(prefix, ".bin"));
  if (bin.size() < count * record) throw TruncatedError("shard data " + prefix.string() + ".bin is truncated");
  if (bin.size() != count * record) throw StructuralError("shard data has trailing bytes");
  std::vector<std::uint8_t> mask_bytes;
  if (masks) {
    mask_bytes = io::read_file(with_suffix(prefix, ".mask"));
    if (mask_bytes.size() != count * h * w) throw StructuralError("shard mask file has the wrong size");
  }

  std::vector<NoduleSample> out;
  out.reserve(count);
  std::istringstream rows(idx.substr(sep + 4));
  std::string line;
  while (std::getline(rows, line)) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 6) throw StructuralError("shard index row '" + line + "' does not have 6 fields");
    const std::size_t i = out.size();
    if (i >= count) throw StructuralError("shard index lists more rows than its count");
    const std::size_t offset = to_size(f[0], "offset");
    if (offset != i * record) throw StructuralError("shard index offset " + f[0] + " is out of sequence");
    const std::uint8_t* p = bin.data() + offset;

    NoduleSample s;
    s.image = Tensor<float>(Shape{1, 1, h, w});
    for (std::size_t k = 0; k < h * w; ++k) s.image[k] = io::get_f32(p + 4 * k);
    const std::uint8_t label = p[h * w * 4];
    if (label > 2) throw StructuralError("shard label byte out of range");
    s.label = static_cast<Label>(label);
    s.score = io::get_i32(p + h * w * 4 + 1);
    if (std::to_string(label) != f[1] || std::to_string(s.score) != f[2]) {
      throw StructuralError("shard index row " + std::to_string(i) + " disagrees with the data file");
    }
    if (masks) {
      s.mask = std::vector<std::uint8_t>(mask_bytes.begin() + static_cast<long>(i * h * w),
                                         mask_bytes.begin() + static_cast<long>((i + 1) * h * w));
    }
    s.provenance = {f[3], f[4], f[5]};
    out.push_back(std::move(s));
  }
  if (out.size() != count) throw StructuralError("shard index lists fewer rows than its count");
  return out;
}

LabeledImages<float> to_labeled(const std::vector<NoduleSample>& samples) {
  if (samples.empty()) return {};
  const Shape one = samples.front().image.shape();
  LabeledImages<float> out;
  out.images = Tensor<float>(Shape{samples.size(), one.c, one.h, one.w});
  out.labels.reserve(samples.size());
  const std::size_t per = one.per_sample();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.image.shape() != one) throw DataError("samples differ in shape: " + s.image.shape().str());
    if (s.label == Label::excluded) throw DataError("sample " + s.provenance.id + " is excluded");
    std::copy(s.image.data().begin(), s.image.data().end(), out.images.data().begin() + static_cast<long>(i * per));
    out.labels.push_back(static_cast<int>(s.label));
  }
  return out;
}

}  // namespace sisc
