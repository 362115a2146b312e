#ifndef OCTLC_DATASET_HPP_
#define OCTLC_DATASET_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace octlc {

// Binary lesion label. Invasive is the positive class throughout: it is the
// class sensitivity is computed on and index 1 of every 2-vector.
enum class LesionLabel { kBenign = 0, kInvasive = 1 };

const char* to_string(LesionLabel label);
std::optional<LesionLabel> parse_label(const std::string& token);

// One stored image of a lesion. image_id doubles as the manifest-relative
// path; dimensions are read from the file header at manifest load.
struct ImageRef {
  std::string image_id;
  std::string path;  // relative to the manifest directory
  int height_px = 0;
  int width_px = 0;

  bool operator==(const ImageRef&) const = default;
};

// A lesion groups all OCT images acquired from one anatomical finding.
// Lesions, not images, are the unit for splitting and evaluation.
struct LesionRecord {
  std::string lesion_id;
  LesionLabel label = LesionLabel::kBenign;
  std::vector<ImageRef> images;
  std::string site;  // optional free text

  bool operator==(const LesionRecord&) const = default;
};

struct DatasetManifest {
  std::vector<LesionRecord> lesions;
  std::string root_dir;  // directory the image paths are relative to
  std::map<LesionLabel, int> counts;

  int lesion_count(LesionLabel label) const {
    auto it = counts.find(label);
    return it == counts.end() ? 0 : it->second;
  }
  int total_images() const;
  const LesionRecord& lesion(const std::string& lesion_id) const;

  // Recomputes counts and re-checks the structural invariants; throws
  // ValidationError on violation. Used by constructors of manifests that
  // are built in memory rather than loaded.
  void finalize();

  std::string resolve_image_path(const ImageRef& ref) const;
};

// Loads and validates a manifest file. The format is UTF-8 CSV with header
// `lesion_id,label,image_path,site`; one row per image, rows of one lesion
// carry the same label and site. Every image path must exist and parse as
// a PGM header. Errors name the offending row.
DatasetManifest load_manifest(const std::string& path);

// Writes a manifest; load_manifest(save_manifest(m)) is structurally equal
// to m when saved into the directory the image paths are relative to.
void save_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace octlc

#endif  // OCTLC_DATASET_HPP_
