#pragma once

// Dataset ingestion: vocabularies, annotation files, frame resolution and
// the detections fixture, bundled per split.

#include "sta/detection.hpp"
#include "sta/types.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace sta {

/// Newline-delimited name list; index in file order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  static Vocabulary load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  /// Throws DataError naming the unknown label.
  int id(const std::string& name) const;
  const std::string& name(int id) const;
  bool contains(const std::string& name) const;
  int size() const { return int(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

/// Where a split lives and which frames belong to it.
struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<std::string> frame_ids;

  std::filesystem::path split_dir() const { return root / split; }
  std::filesystem::path frame_path(const std::string& frame_id) const {
    return split_dir() / "frames" / (frame_id + ".png");
  }
  std::filesystem::path annotations_file() const {
    return split_dir() / "annotations.json";
  }
  std::filesystem::path detections_file() const {
    return split_dir() / "detections.json";
  }
  std::filesystem::path manifest_file() const {
    return split_dir() / "manifest.json";
  }
  std::filesystem::path nouns_file() const { return root / "nouns.txt"; }
  std::filesystem::path verbs_file() const { return root / "verbs.txt"; }
};

/// One loaded split. Frame order follows the manifest and is the canonical
/// iteration order everywhere downstream.
struct Dataset {
  DatasetManifest manifest;
  Vocabulary nouns;
  Vocabulary verbs;
  std::vector<StaAnnotation> annotations;  // aligned with manifest.frame_ids
  FixtureDetections detections;

  const StaAnnotation& annotation(std::size_t i) const { return annotations[i]; }
  std::size_t size() const { return annotations.size(); }
};

/// Loads and validates a split: every frame id must resolve to an image, an
/// annotation record and a detections entry; labels must be in-vocabulary;
/// every target must satisfy the annotation invariants. Violations raise
/// DataError with the record location.
Dataset load_dataset(const std::filesystem::path& root,
                     const std::string& split);

/// Annotation file I/O. Records store noun/verb names, not ids.
std::vector<StaAnnotation> load_annotations(const std::filesystem::path& file,
                                            const Vocabulary& nouns,
                                            const Vocabulary& verbs);
void save_annotations(const std::filesystem::path& file,
                      const std::vector<StaAnnotation>& annotations,
                      const Vocabulary& nouns, const Vocabulary& verbs);

}  // namespace sta
