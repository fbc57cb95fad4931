#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "wavelatent/binary_io.hpp"
#include "wavelatent/dmaps.hpp"
#include "wavelatent/lpyramid.hpp"
#include "wavelatent/models.hpp"

namespace wavelatent {

/// Payload tag of a WLMD container: "WLMD", u16 version, u8 kind, body.
enum class ModelKind : std::uint8_t { network = 1, dmap = 2, pyramid = 3, bundle = 4 };

inline constexpr std::uint16_t kModelVersion = 1;

namespace container {

void write_header(io::ByteWriter& w, ModelKind kind);
/// Validates magic and version; returns the kind tag.
ModelKind read_header(io::ByteReader& r);
void expect_kind(io::ByteReader& r, ModelKind kind);

void write_matrix(io::ByteWriter& w, const RowMatrix& m);
RowMatrix read_matrix(io::ByteReader& r);

void write_network(io::ByteWriter& w, const NetworkModel& model);
NetworkModel read_network(io::ByteReader& r);
void write_dmap(io::ByteWriter& w, const DMapModel& model);
DMapModel read_dmap(io::ByteReader& r);
void write_pyramid(io::ByteWriter& w, const PyramidModel& model);
PyramidModel read_pyramid(io::ByteReader& r);

}  // namespace container

/// Kind tag of a container without decoding the body.
ModelKind peek_model_kind(std::span<const char> bytes);

std::vector<char> encode_network(const NetworkModel& model);
/// FormatError when `expected` is given and the stored family differs.
NetworkModel decode_network(std::span<const char> bytes, std::optional<NetworkFamily> expected = std::nullopt);
std::vector<char> encode_dmap(const DMapModel& model);
DMapModel decode_dmap(std::span<const char> bytes);
std::vector<char> encode_pyramid(const PyramidModel& model);
PyramidModel decode_pyramid(std::span<const char> bytes);

void save_network(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_network(const std::filesystem::path& path, std::optional<NetworkFamily> expected = std::nullopt);
void save_dmap(const DMapModel& model, const std::filesystem::path& path);
DMapModel load_dmap(const std::filesystem::path& path);
void save_pyramid(const PyramidModel& model, const std::filesystem::path& path);
PyramidModel load_pyramid(const std::filesystem::path& path);

}  // namespace wavelatent
