#include "haft/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "haft/errors.hpp"

namespace haft {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payloads are written in native little-endian order");

std::string file_name_for(std::size_t index) { return "array_" + std::to_string(index) + ".bin"; }

std::string manifest_digest(const json& arrays) { return sha256_hex(arrays.dump().data(), arrays.dump().size()); }

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data, size, digest, &length, EVP_sha256(), nullptr) != 1) throw DataError("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

const CheckpointArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  fs::create_directories(dir);
  json arrays = json::array();
  std::set<std::string> names;
  for (std::size_t i = 0; i < checkpoint.arrays.size(); ++i) {
    const CheckpointArray& a = checkpoint.arrays[i];
    if (!names.insert(a.name).second) throw DataError("duplicate checkpoint array '" + a.name + "'");
    const std::string file = file_name_for(i);
    const std::size_t bytes = a.value.size() * sizeof(double);
    std::ofstream out(dir / file, std::ios::binary);
    out.write(reinterpret_cast<const char*>(a.value.data()), static_cast<std::streamsize>(bytes));
    if (!out) throw DataError("cannot write " + (dir / file).string());
    arrays.push_back({{"name", a.name},
                      {"file", file},
                      {"shape", a.value.shape()},
                      {"dtype", "float64"},
                      {"train_only", a.train_only},
                      {"sha256", sha256_hex(a.value.data(), bytes)}});
  }
  json manifest = {{"format", "haft-checkpoint-1"},
                   {"iteration", checkpoint.iteration},
                   {"seed", checkpoint.seed},
                   {"config", checkpoint.config},
                   {"arrays", arrays},
                   {"arrays_sha256", manifest_digest(arrays)}};
  // Written last so a partially written directory never looks complete.
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
}

Checkpoint load_checkpoint(const fs::path& dir, bool strict) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("missing checkpoint manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  const json& arrays = manifest.at("arrays");
  if (manifest_digest(arrays) != manifest.at("arrays_sha256").get<std::string>()) {
    throw DataError("checkpoint manifest hash mismatch in " + dir.string());
  }
  Checkpoint ck;
  ck.iteration = manifest.at("iteration").get<std::int64_t>();
  ck.seed = manifest.at("seed").get<std::uint64_t>();
  ck.config = manifest.at("config").get<std::map<std::string, std::string>>();
  for (const json& entry : arrays) {
    CheckpointArray a;
    a.name = entry.at("name").get<std::string>();
    a.train_only = entry.at("train_only").get<bool>();
    if (a.train_only && !strict) continue;
    if (entry.at("dtype").get<std::string>() != "float64") throw DataError("unsupported dtype for " + a.name);
    a.value = nn::Tensor(entry.at("shape").get<nn::Shape>());
    const std::size_t bytes = a.value.size() * sizeof(double);
    const fs::path file = dir / entry.at("file").get<std::string>();
    std::ifstream payload(file, std::ios::binary | std::ios::ate);
    if (!payload) throw DataError("missing checkpoint payload " + file.string());
    if (static_cast<std::size_t>(payload.tellg()) != bytes) throw DataError("payload size mismatch for " + a.name);
    payload.seekg(0);
    payload.read(reinterpret_cast<char*>(a.value.data()), static_cast<std::streamsize>(bytes));
    if (sha256_hex(a.value.data(), bytes) != entry.at("sha256").get<std::string>()) {
      throw DataError("checkpoint hash mismatch for array '" + a.name + "'");
    }
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

std::vector<CheckpointArray> snapshot(const nn::ParamList& arrays, bool train_only) {
  std::vector<CheckpointArray> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back({a.name, a.var.value(), train_only});
  return out;
}

void restore(const Checkpoint& checkpoint, const nn::ParamList& arrays) {
  std::set<std::string> known;
  for (const auto& a : arrays) known.insert(a.name);
  for (const auto& a : checkpoint.arrays) {
    if (!a.train_only && !known.count(a.name)) throw DataError("unknown checkpoint array '" + a.name + "'");
  }
  for (const auto& target : arrays) {
    const CheckpointArray* src = checkpoint.find(target.name);
    if (!src) throw DataError("checkpoint lacks array '" + target.name + "'");
    if (src->value.shape() != target.var.shape()) {
      throw DataError("shape mismatch for '" + target.name + "': checkpoint " + nn::shape_string(src->value.shape()) +
                      ", model " + nn::shape_string(target.var.shape()));
    }
    nn::Var v = target.var;
    v.mutable_value() = src->value;
  }
}

}  // namespace haft
