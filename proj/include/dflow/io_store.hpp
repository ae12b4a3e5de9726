#pragma once

#include "dflow/diffeo.hpp"
#include "dflow/grid.hpp"
#include "dflow/lifting.hpp"
#include "dflow/solvers.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace dflow {

// Archive layout, all little-endian:
//   "DFLO" | u32 version | u8 kind | u64 nx | u64 ny | u32 channels | u64 payload length | payload
// Field payload: channels planes of ny*nx float64, x fastest.
// Map payload: the 8 Hermite planes in DiffeoMap plane order.
// Chain payload: u64 count, then count map payloads.
// Trajectory payload: u64 n + n bytes of JSON metadata, u64 frame count, frames, u8 has_chain,
//   then a chain payload when has_chain is 1.
// Lifter payload: u64 n + n bytes of JSON metadata, then the rows*cols weights, row-major.

inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::size_t kHeaderBytes = 37;

enum class ArchiveKind : std::uint8_t { Field = 1, Map = 2, Chain = 3, Trajectory = 4, Lifter = 5 };

struct ArchiveHeader {
  std::uint32_t version = kArchiveVersion;
  ArchiveKind kind = ArchiveKind::Field;
  std::uint64_t nx = 0;
  std::uint64_t ny = 0;
  std::uint32_t channels = 0;
  std::uint64_t payload_length = 0;
};

// In-memory encoding; the file functions write exactly these bytes.
std::string encode_field(const PeriodicField& field);
PeriodicField decode_field(const std::string& bytes);
std::string encode_map(const DiffeoMap& map);
DiffeoMap decode_map(const std::string& bytes);
std::string encode_chain(const MapChain& chain);
MapChain decode_chain(const std::string& bytes);
std::string encode_trajectory(const Trajectory& trajectory, bool with_chain = true);
Trajectory decode_trajectory(const std::string& bytes);
std::string encode_lifter(const SpectralLifter& lifter);
SpectralLifter decode_lifter(const std::string& bytes);

/// Parses and validates the header of an archive (magic, version, kind range).
ArchiveHeader decode_header(const std::string& bytes);
ArchiveHeader read_header(const std::filesystem::path& path);

void save_field(const std::filesystem::path& path, const PeriodicField& field);
PeriodicField load_field(const std::filesystem::path& path);
void save_map(const std::filesystem::path& path, const DiffeoMap& map);
DiffeoMap load_map(const std::filesystem::path& path);
void save_chain(const std::filesystem::path& path, const MapChain& chain);
MapChain load_chain(const std::filesystem::path& path);
void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory, bool with_chain = true);
Trajectory load_trajectory(const std::filesystem::path& path);
void save_lifter(const std::filesystem::path& path, const SpectralLifter& lifter);
SpectralLifter load_lifter(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace dflow
