#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "haft/data_io.hpp"
#include "haft/synthetic.hpp"

namespace haft {

/// Random-access collection of sequences whose frames may be produced lazily.
class SequenceSource {
 public:
  virtual ~SequenceSource() = default;

  virtual std::size_t count() const = 0;
  virtual std::string name(std::size_t seq) const = 0;
  virtual const std::vector<BoundingBox>& boxes(std::size_t seq) const = 0;
  virtual const std::optional<std::vector<double>>& visibility(std::size_t seq) const = 0;
  virtual Image frame(std::size_t seq, int index) const = 0;

  int length(std::size_t seq) const { return static_cast<int>(boxes(seq).size()); }
  Sequence materialize(std::size_t seq) const;
};

class InMemorySource final : public SequenceSource {
 public:
  explicit InMemorySource(std::vector<Sequence> sequences);

  std::size_t count() const override { return sequences_.size(); }
  std::string name(std::size_t seq) const override { return sequences_.at(seq).name; }
  const std::vector<BoundingBox>& boxes(std::size_t seq) const override { return sequences_.at(seq).boxes; }
  const std::optional<std::vector<double>>& visibility(std::size_t seq) const override {
    return sequences_.at(seq).visibility;
  }
  Image frame(std::size_t seq, int index) const override { return sequences_.at(seq).frames.at(index).pixels; }

 private:
  std::vector<Sequence> sequences_;
};

/// Synthetic scenes rendered on demand; memory stays proportional to the scene count.
class SyntheticSource final : public SequenceSource {
 public:
  /// Scene i uses seed `first_seed + i`.
  SyntheticSource(const SynthConfig& config, std::uint64_t first_seed, std::size_t count);

  std::size_t count() const override { return scenes_.size(); }
  std::string name(std::size_t seq) const override;
  const std::vector<BoundingBox>& boxes(std::size_t seq) const override { return scenes_.at(seq).boxes(); }
  const std::optional<std::vector<double>>& visibility(std::size_t seq) const override {
    return visibility_.at(seq);
  }
  Image frame(std::size_t seq, int index) const override { return scenes_.at(seq).render(index); }

  const SyntheticScene& scene(std::size_t seq) const { return scenes_.at(seq); }

 private:
  std::vector<SyntheticScene> scenes_;
  std::vector<std::optional<std::vector<double>>> visibility_;
};

/// Every sequence directory directly below `root` (sorted by name); frames decoded on demand.
class DirectorySource final : public SequenceSource {
 public:
  explicit DirectorySource(const std::filesystem::path& root);

  std::size_t count() const override { return index_.size(); }
  std::string name(std::size_t seq) const override { return index_.at(seq).name; }
  const std::vector<BoundingBox>& boxes(std::size_t seq) const override { return index_.at(seq).boxes; }
  const std::optional<std::vector<double>>& visibility(std::size_t seq) const override {
    return index_.at(seq).visibility;
  }
  Image frame(std::size_t seq, int index) const override;

 private:
  std::vector<SequenceIndex> index_;
};

}  // namespace haft
