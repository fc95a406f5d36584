#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace touchloc {

// 64-bit FNV-1a. Used for artifact provenance (mismatch detection between
// grid / checkpoint / bank files), not for security.
class ContentHash {
 public:
  ContentHash() = default;

  void update(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ull;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  template <typename T>
  void update_pod(const T& v) {
    update(&v, sizeof(T));
  }

  uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string hash_bytes(const void* data, size_t n);
std::string hash_file(const std::filesystem::path& path);

// Little-endian binary file helpers shared by the artifact formats.
void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace touchloc
