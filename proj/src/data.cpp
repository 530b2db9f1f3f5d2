#include "sta/data.hpp"

#include <json.hpp>

#include <fstream>

namespace sta {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> names)
    : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], int(i)).second)
      throw DataError("duplicate vocabulary entry '" + names_[i] + "'");
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw DataError("cannot open vocabulary file: " + file.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  if (names.empty())
    throw DataError("vocabulary file is empty: " + file.string());
  return Vocabulary(std::move(names));
}

void Vocabulary::save(const std::filesystem::path& file) const {
  std::ofstream os(file);
  if (!os)
    throw DataError("cannot open vocabulary file for writing: " + file.string());
  for (const std::string& name : names_) os << name << '\n';
}

int Vocabulary::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw DataError("label '" + name + "' is not in the vocabulary");
  return it->second;
}

const std::string& Vocabulary::name(int id) const {
  if (id < 0 || std::size_t(id) >= names_.size())
    throw DataError("vocabulary id " + std::to_string(id) + " out of range");
  return names_[std::size_t(id)];
}

bool Vocabulary::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::vector<StaAnnotation> load_annotations(const std::filesystem::path& file,
                                            const Vocabulary& nouns,
                                            const Vocabulary& verbs) {
  std::ifstream is(file);
  if (!is) throw DataError("cannot open annotations file: " + file.string());
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("bad annotations file " + file.string() + ": " + e.what());
  }
  if (!root.is_array())
    throw DataError("annotations file must be a JSON array: " + file.string());

  std::vector<StaAnnotation> out;
  out.reserve(root.size());
  for (std::size_t r = 0; r < root.size(); ++r) {
    const json& rec = root[r];
    StaAnnotation ann;
    try {
      ann.frame_id = rec.at("frame_id").get<std::string>();
      for (const json& t : rec.at("targets")) {
        const json& b = t.at("box");
        if (!b.is_array() || b.size() != 4)
          throw DataError("box must have four coordinates");
        StaTarget target;
        target.box = {b[0].get<Real>(), b[1].get<Real>(), b[2].get<Real>(),
                      b[3].get<Real>()};
        target.noun_id = nouns.id(t.at("noun").get<std::string>());
        target.verb_id = verbs.id(t.at("verb").get<std::string>());
        target.ttc = t.at("ttc").get<Real>();
        if (!target.box.valid())
          throw DataError("target box is not a valid normalized box");
        if (!(target.ttc > 0))
          throw DataError("target ttc must be positive");
        ann.targets.push_back(target);
      }
    } catch (const json::exception& e) {
      throw DataError("annotations record " + std::to_string(r) + " in " +
                      file.string() + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("annotations record " + std::to_string(r) + " in " +
                      file.string() + ": " + e.what());
    }
    out.push_back(std::move(ann));
  }
  return out;
}

void save_annotations(const std::filesystem::path& file,
                      const std::vector<StaAnnotation>& annotations,
                      const Vocabulary& nouns, const Vocabulary& verbs) {
  json root = json::array();
  for (const StaAnnotation& ann : annotations) {
    json targets = json::array();
    for (const StaTarget& t : ann.targets) {
      targets.push_back({{"box", {t.box.x1, t.box.y1, t.box.x2, t.box.y2}},
                         {"noun", nouns.name(t.noun_id)},
                         {"verb", verbs.name(t.verb_id)},
                         {"ttc", t.ttc}});
    }
    root.push_back({{"frame_id", ann.frame_id}, {"targets", targets}});
  }
  std::ofstream os(file);
  if (!os)
    throw DataError("cannot open annotations file for writing: " +
                    file.string());
  os << root.dump(2) << '\n';
}

namespace {

std::vector<std::string> load_manifest_ids(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw DataError("cannot open manifest: " + file.string());
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("bad manifest " + file.string() + ": " + e.what());
  }
  try {
    return root.at("frame_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError("manifest " + file.string() +
                    " must contain a frame_ids list: " + e.what());
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& root,
                     const std::string& split) {
  Dataset ds;
  ds.manifest.root = root;
  ds.manifest.split = split;
  if (!std::filesystem::is_directory(ds.manifest.split_dir()))
    throw DataError("split directory does not exist: " +
                    ds.manifest.split_dir().string());

  ds.manifest.frame_ids = load_manifest_ids(ds.manifest.manifest_file());
  ds.nouns = Vocabulary::load(ds.manifest.nouns_file());
  ds.verbs = Vocabulary::load(ds.manifest.verbs_file());

  std::vector<StaAnnotation> records =
      load_annotations(ds.manifest.annotations_file(), ds.nouns, ds.verbs);
  std::unordered_map<std::string, std::size_t> by_frame;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!by_frame.emplace(records[i].frame_id, i).second)
      throw DataError("duplicate annotation for frame '" + records[i].frame_id +
                      "' in " + ds.manifest.annotations_file().string());
  }

  ds.detections = FixtureDetections::load(ds.manifest.detections_file());

  ds.annotations.reserve(ds.manifest.frame_ids.size());
  for (const std::string& frame_id : ds.manifest.frame_ids) {
    auto it = by_frame.find(frame_id);
    if (it == by_frame.end())
      throw DataError("frame '" + frame_id + "' has no annotation record in " +
                      ds.manifest.annotations_file().string());
    if (!ds.detections.has(frame_id))
      throw DataError("frame '" + frame_id + "' has no detections entry in " +
                      ds.manifest.detections_file().string());
    if (!std::filesystem::exists(ds.manifest.frame_path(frame_id)))
      throw DataError("frame image missing: " +
                      ds.manifest.frame_path(frame_id).string());
    for (const DetectionCandidate& c : ds.detections.detect(frame_id)) {
      if (c.noun_id < 0 || c.noun_id >= ds.nouns.size())
        throw DataError("frame '" + frame_id + "': detection noun id " +
                        std::to_string(c.noun_id) + " outside the vocabulary");
    }
    ds.annotations.push_back(records[it->second]);
  }
  return ds;
}

}  // namespace sta
