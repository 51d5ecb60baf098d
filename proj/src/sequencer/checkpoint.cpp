#include <cstring>

#include "sisc/io.hpp"
#include "sisc/sequencer.hpp"

namespace sisc {

namespace {

constexpr char kMagic[4] = {'S', 'I', 'S', 'C'};
constexpr std::size_t kHeader = 12;  // magic, version, config length
constexpr std::size_t kTrailer = 4;  // crc

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Sequencer<float>& model) {
  const std::string config = model.config.to_text();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(config.size()));
  out.insert(out.end(), config.begin(), config.end());
  for (const auto& t : model.tensors()) {
    for (float v : t.values) io::put_f32(out, v);
  }
  io::put_u32(out, io::crc32(out));
  return out;
}

std::uint32_t checkpoint_identity(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeader + kTrailer) throw TruncatedError("checkpoint too short for a trailer");
  return io::get_u32(bytes.data() + bytes.size() - kTrailer);
}

Sequencer<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: missing SISC magic");
  }
  if (bytes.size() < kHeader + kTrailer) {
    throw TruncatedError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  const std::size_t body = bytes.size() - kTrailer;
  const std::uint32_t stored = io::get_u32(bytes.data() + body);
  const std::uint32_t actual = io::crc32(bytes.first(body));
  if (stored != actual) {
    throw ChecksumError("checkpoint checksum mismatch: stored " + io::hex32(stored) + ", computed " +
                        io::hex32(actual));
  }
  const std::uint32_t version = io::get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const std::uint32_t config_len = io::get_u32(bytes.data() + 8);
  if (kHeader + config_len > body) throw StructuralError("config block runs past the end of the file");

  SequencerConfig config;
  try {
    config = SequencerConfig::from_text(
        std::string(reinterpret_cast<const char*>(bytes.data() + kHeader), config_len));
    config.validate();
  } catch (const DataError& e) {
    throw StructuralError(std::string("checkpoint config unreadable: ") + e.what());
  } catch (const ConfigError& e) {
    throw StructuralError(std::string("checkpoint config invalid: ") + e.what());
  }

  const std::size_t floats = parameter_count(config) + buffer_count(config);
  const std::size_t blob = body - kHeader - config_len;
  if (blob != floats * 4) {
    throw StructuralError("config describes " + std::to_string(floats) + " floats but the file holds " +
                          std::to_string(blob) + " bytes of weights");
  }

  Rng rng(0);
  Sequencer<float> model = build_sequencer<float>(config, rng);
  const std::uint8_t* p = bytes.data() + kHeader + config_len;
  for (auto& t : model.tensors()) {
    for (float& v : t.values) {
      v = io::get_f32(p);
      p += 4;
    }
  }
  for (const auto& cell : model.cells) {
    for (const auto& st : cell.stages) {
      for (float v : st.bn.running_var) {
        if (!(v >= 0.0f)) throw StructuralError("checkpoint holds a negative running variance");
      }
    }
  }
  return model;
}

void save_checkpoint(const Sequencer<float>& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

Sequencer<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace sisc
