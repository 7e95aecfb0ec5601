#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace snn {

// Little-endian byte packing helpers shared by the EVT container and the
// checkpoint format.
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);

// Readers advance `pos`; they throw IoError on truncation.
std::uint8_t get_u8(const std::vector<std::uint8_t>& in, std::size_t& pos);
std::uint16_t get_u16(const std::vector<std::uint8_t>& in, std::size_t& pos);
std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos);
std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& pos);
double get_f64(const std::vector<std::uint8_t>& in, std::size_t& pos);

// CRC-32 (IEEE 802.3 polynomial, reflected).
std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace snn
