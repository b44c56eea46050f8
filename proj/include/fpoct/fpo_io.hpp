#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "fpoct/error.hpp"
#include "fpoct/fpo.hpp"

namespace fpoct {

enum class FpoFormatErrorKind { BadMagic, UnsupportedVersion, CorruptHeader, TruncatedPayload, IntegrityFailure };

const char* to_string(FpoFormatErrorKind kind);

class FpoFormatError : public Error {
 public:
  FpoFormatError(FpoFormatErrorKind kind, const std::string& detail)
      : Error(ErrorKind::Data, std::string(to_string(kind)) + ": " + detail), format_kind_(kind) {}
  FpoFormatErrorKind format_kind() const noexcept { return format_kind_; }

 private:
  FpoFormatErrorKind format_kind_;
};

inline constexpr uint32_t kFpoVersion = 1;
inline constexpr size_t kFpoHeaderBytes = 64;

enum class FpoKind : uint32_t { Static = 0, Fourier = 1 };

struct FpoHeader {
  FpoKind kind = FpoKind::Static;
  float bbox[6] = {0, 0, 0, 0, 0, 0};
  uint32_t lmax = 0;
  uint32_t grid_n = 0;
  uint32_t frames = 1;
  uint32_t n1 = 1;
  uint32_t n2 = 1;
  uint32_t node_count = 0;
  uint32_t leaf_count = 0;

  /// floats per leaf
  uint64_t payload_len() const;
  uint64_t file_size() const;
};

using FpoModel = std::variant<Octree, FourierOctree>;

std::vector<uint8_t> serialize(const Octree& tree);
std::vector<uint8_t> serialize(const FourierOctree& fpo);
/// Throws FpoFormatError.
FpoModel deserialize(std::span<const uint8_t> bytes);
/// Validates and decodes only the fixed header.
FpoHeader parse_header(std::span<const uint8_t> bytes);

/// Returns the number of bytes written.
size_t save(const Octree& tree, const std::filesystem::path& path);
size_t save(const FourierOctree& fpo, const std::filesystem::path& path);
FpoModel load(const std::filesystem::path& path);

std::vector<uint8_t> read_file(const std::filesystem::path& path);

}  // namespace fpoct
