#include "octlc/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "octlc/error.hpp"
#include "octlc/image_io.hpp"

namespace fs = std::filesystem;

namespace octlc {

const char* to_string(LesionLabel label) {
  return label == LesionLabel::kBenign ? "benign" : "invasive";
}

std::optional<LesionLabel> parse_label(const std::string& token) {
  if (token == "benign") return LesionLabel::kBenign;
  if (token == "invasive") return LesionLabel::kInvasive;
  return std::nullopt;
}

int DatasetManifest::total_images() const {
  int n = 0;
  for (const auto& l : lesions) n += static_cast<int>(l.images.size());
  return n;
}

const LesionRecord& DatasetManifest::lesion(const std::string& lesion_id) const {
  for (const auto& l : lesions) {
    if (l.lesion_id == lesion_id) return l;
  }
  throw ValidationError("manifest: unknown lesion_id: " + lesion_id);
}

std::string DatasetManifest::resolve_image_path(const ImageRef& ref) const {
  return (fs::path(root_dir) / ref.path).string();
}

void DatasetManifest::finalize() {
  counts.clear();
  std::set<std::string> lesion_ids;
  std::set<std::string> image_ids;
  for (const auto& l : lesions) {
    if (l.lesion_id.empty()) throw ValidationError("manifest: empty lesion_id");
    if (!lesion_ids.insert(l.lesion_id).second) {
      throw ValidationError("manifest: duplicate lesion_id: " + l.lesion_id);
    }
    if (l.images.empty()) {
      throw ValidationError("manifest: lesion has no images: " + l.lesion_id);
    }
    for (const auto& img : l.images) {
      if (!image_ids.insert(img.image_id).second) {
        throw ValidationError("manifest: duplicate image_id: " + img.image_id);
      }
    }
    counts[l.label] += 1;
  }
}

namespace {

// Minimal CSV with RFC-4180 style quoting; site is free text and may
// contain commas.
std::vector<std::string> split_csv_row(const std::string& line, int row_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"' && cur.empty()) {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (in_quotes) {
    throw ValidationError("manifest row " + std::to_string(row_no) +
                          ": unterminated quoted field");
  }
  fields.push_back(cur);
  return fields;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

constexpr const char* kHeader = "lesion_id,label,image_path,site";

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot open " + path);

  DatasetManifest m;
  m.root_dir = fs::path(path).parent_path().string();
  if (m.root_dir.empty()) m.root_dir = ".";

  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("manifest: empty file: " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw ValidationError("manifest row 1: expected header `" +
                          std::string(kHeader) + "`, got `" + line + "`");
  }

  std::map<std::string, std::size_t> index_of;  // lesion_id -> lesions index
  std::set<std::string> image_ids;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_row(line, row_no);
    if (fields.size() != 4) {
      throw ValidationError("manifest row " + std::to_string(row_no) +
                            ": expected 4 fields, got " +
                            std::to_string(fields.size()));
    }
    const std::string& lesion_id = fields[0];
    const std::string& label_tok = fields[1];
    const std::string& image_path = fields[2];
    const std::string& site = fields[3];
    if (lesion_id.empty()) {
      throw ValidationError("manifest row " + std::to_string(row_no) +
                            ": empty lesion_id");
    }
    const auto label = parse_label(label_tok);
    if (!label) {
      throw ValidationError("manifest row " + std::to_string(row_no) +
                            ": unknown label `" + label_tok + "`");
    }
    if (image_path.empty()) {
      throw ValidationError("manifest row " + std::to_string(row_no) +
                            ": empty image_path");
    }
    if (!image_ids.insert(image_path).second) {
      throw ValidationError("manifest row " + std::to_string(row_no) +
                            ": duplicate image_id: " + image_path);
    }

    ImageRef ref;
    ref.image_id = image_path;
    ref.path = image_path;
    const std::string full = (fs::path(m.root_dir) / image_path).string();
    if (!fs::exists(full)) {
      throw ValidationError("manifest row " + std::to_string(row_no) +
                            ": image file does not exist: " + full);
    }
    try {
      read_pgm_dims(full, ref.height_px, ref.width_px);
    } catch (const Error& e) {
      throw ValidationError("manifest row " + std::to_string(row_no) + ": " +
                            e.what());
    }

    auto it = index_of.find(lesion_id);
    if (it == index_of.end()) {
      LesionRecord rec;
      rec.lesion_id = lesion_id;
      rec.label = *label;
      rec.site = site;
      rec.images.push_back(std::move(ref));
      index_of.emplace(lesion_id, m.lesions.size());
      m.lesions.push_back(std::move(rec));
    } else {
      LesionRecord& rec = m.lesions[it->second];
      if (rec.label != *label) {
        throw ValidationError("manifest row " + std::to_string(row_no) +
                              ": duplicate lesion_id: " + lesion_id +
                              " (conflicting labels)");
      }
      if (rec.site != site) {
        throw ValidationError("manifest row " + std::to_string(row_no) +
                              ": duplicate lesion_id: " + lesion_id +
                              " (conflicting sites)");
      }
      rec.images.push_back(std::move(ref));
    }
  }

  m.finalize();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("manifest: cannot write " + path);
  out << kHeader << "\n";
  for (const auto& l : manifest.lesions) {
    for (const auto& img : l.images) {
      out << csv_escape(l.lesion_id) << "," << to_string(l.label) << ","
          << csv_escape(img.path) << "," << csv_escape(l.site) << "\n";
    }
  }
  if (!out) throw IoError("manifest: write failed for " + path);
}

}  // namespace octlc
