#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sisc::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Little-endian append/read helpers.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_i32(std::vector<std::uint8_t>& out, std::int32_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(const std::uint8_t* p);
std::int32_t get_i32(const std::uint8_t* p);
float get_f32(const std::uint8_t* p);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> pixels;  // row-major
};

// Binary PGM (P5), 8- or 16-bit.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

std::string hex32(std::uint32_t v);

// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Flat `key = value` lines; blank lines and lines starting with '#' are
// skipped. Throws ParseError on a line without '='.
std::vector<KeyValue> parse_key_values(const std::string& text);

}  // namespace sisc::io
