#ifndef OCTLC_SHA256_HPP_
#define OCTLC_SHA256_HPP_

#include <cstddef>
#include <cstdint>
#include <string>

namespace octlc {

// Incremental SHA-256 producing a lowercase hex digest. Backed by OpenSSL.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size);
  void update(const std::string& s) { update(s.data(), s.size()); }
  void update_u64(std::uint64_t v);

  // Finalizes and returns the hex digest; the object must not be reused.
  std::string hex_digest();

  static std::string hex_of(const void* data, std::size_t size);
  static std::string hex_of_string(const std::string& s) {
    return hex_of(s.data(), s.size());
  }
  static std::string hex_of_file(const std::string& path);

 private:
  void* ctx_;
};

}  // namespace octlc

#endif  // OCTLC_SHA256_HPP_
