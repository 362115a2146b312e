#ifndef OCTLC_TESTS_TESTUTIL_HPP_
#define OCTLC_TESTS_TESTUTIL_HPP_

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "octlc/dataset.hpp"
#include "octlc/image_io.hpp"
#include "octlc/modelkit.hpp"

namespace octlc::testutil {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& hint) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("octlc-test-" + hint + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  out << content;
}

inline GrayImage test_image(int height, int width, std::uint8_t value) {
  return GrayImage::filled(height, width, value);
}

// In-memory manifest with fake image refs; for code paths that never open
// the image files (splits, metrics).
inline DatasetManifest synthetic_manifest(int n_benign, int n_invasive,
                                          int images_per_lesion = 1) {
  DatasetManifest m;
  m.root_dir = ".";
  const int total = n_benign + n_invasive;
  for (int i = 0; i < total; ++i) {
    LesionRecord rec;
    char id[16];
    std::snprintf(id, sizeof(id), "L%03d", i + 1);
    rec.lesion_id = id;
    rec.label = i < n_benign ? LesionLabel::kBenign : LesionLabel::kInvasive;
    for (int j = 0; j < images_per_lesion; ++j) {
      ImageRef ref;
      ref.image_id = std::string(id) + "_" + std::to_string(j);
      ref.path = ref.image_id + ".pgm";
      ref.height_px = 180;
      ref.width_px = 260;
      rec.images.push_back(ref);
    }
    m.lesions.push_back(std::move(rec));
  }
  m.finalize();
  return m;
}

// Synthesized stand-in pretrained checkpoints are expensive to build, so
// tests share one per architecture under OCTLC_WEIGHTS_DIR (the build sets
// it to a directory inside the build tree). Synthesis goes through a temp
// file + rename so concurrent test binaries cannot observe a torn file.
inline std::string ensure_test_weights(BackboneId id, std::uint64_t seed = 2024) {
  const std::string dest = pretrained_checkpoint_path(id);
  if (fs::exists(dest)) return dest;
  const std::string tmp = dest + ".tmp." + std::to_string(::getpid());
  synthesize_pretrained(id, seed, tmp);
  std::error_code ec;
  fs::rename(tmp, dest, ec);
  if (ec && !fs::exists(dest)) {
    fs::copy_file(tmp, dest, fs::copy_options::overwrite_existing);
    fs::remove(tmp, ec);
  } else if (ec) {
    fs::remove(tmp, ec);
  }
  return dest;
}

}  // namespace octlc::testutil

#endif  // OCTLC_TESTS_TESTUTIL_HPP_
