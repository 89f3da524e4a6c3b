#include "haft/dataset.hpp"

#include <algorithm>

#include "haft/errors.hpp"

namespace haft {

Sequence SequenceSource::materialize(std::size_t seq) const {
  Sequence out;
  out.name = name(seq);
  out.boxes = boxes(seq);
  out.visibility = visibility(seq);
  for (int t = 0; t < length(seq); ++t) out.frames.push_back({frame(seq, t), t});
  return out;
}

InMemorySource::InMemorySource(std::vector<Sequence> sequences) : sequences_(std::move(sequences)) {
  for (const Sequence& s : sequences_) s.validate();
}

SyntheticSource::SyntheticSource(const SynthConfig& config, std::uint64_t first_seed, std::size_t count) {
  scenes_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    scenes_.emplace_back(config, first_seed + i);
    visibility_.emplace_back(scenes_.back().visibility());
  }
}

std::string SyntheticSource::name(std::size_t seq) const {
  return "synthetic_" + std::to_string(scenes_.at(seq).seed());
}

DirectorySource::DirectorySource(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "groundtruth.txt")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) index_.push_back(index_sequence(d));
  if (index_.empty()) throw DataError("no sequence directories under " + root.string());
}

Image DirectorySource::frame(std::size_t seq, int index) const {
  return read_image(index_.at(seq).frame_paths.at(static_cast<std::size_t>(index)));
}

}  // namespace haft
