#include "panokit/serialize.hpp"

#include <cstdint>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "panokit/error.hpp"

namespace panokit {
namespace {

using nlohmann::json;

struct Entry {
  std::string name;
  std::string kind;  // "param" or "buffer"
  Tensor* tensor;
};

std::vector<Entry> layout(const ParamStore& store) {
  std::vector<Entry> entries;
  for (const auto& p : store.params())
    entries.push_back({p->name, "param", &p->value});
  for (const auto& [name, tensor] : store.buffers())
    entries.push_back({name, "buffer", tensor});
  return entries;
}

}  // namespace

void save_weights(const ParamStore& store, const std::string& path) {
  const std::vector<Entry> entries = layout(store);

  json manifest;
  manifest["format"] = "panokit-weights";
  manifest["version"] = 1;
  json list = json::array();
  size_t offset = 0;
  for (const Entry& e : entries) {
    json item;
    item["name"] = e.name;
    item["kind"] = e.kind;
    item["shape"] = e.tensor->shape();
    item["offset"] = offset;
    list.push_back(std::move(item));
    offset += e.tensor->size();
  }
  manifest["entries"] = std::move(list);
  manifest["total"] = offset;

  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot open for writing: " + path);
  for (const Entry& e : entries) {
    bin.write(reinterpret_cast<const char*>(e.tensor->ptr()),
              std::streamsize(e.tensor->size() * sizeof(double)));
  }
  if (!bin) throw IoError("write failed: " + path);
  bin.close();

  std::ofstream meta(path + ".json", std::ios::trunc);
  if (!meta) throw IoError("cannot open for writing: " + path + ".json");
  meta << manifest.dump(2) << "\n";
  if (!meta) throw IoError("write failed: " + path + ".json");
}

void load_weights(ParamStore& store, const std::string& path) {
  std::ifstream meta(path + ".json");
  if (!meta) throw IoError("cannot open: " + path + ".json");
  json manifest;
  try {
    meta >> manifest;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path + ".json: " + e.what());
  }
  if (!manifest.contains("entries") || !manifest["entries"].is_array())
    throw IoError("manifest has no entry list: " + path + ".json");

  const std::vector<Entry> entries = layout(store);
  const json& list = manifest["entries"];
  if (list.size() != entries.size()) {
    throw DimensionError("weights: manifest has " +
                         std::to_string(list.size()) + " entries, store has " +
                         std::to_string(entries.size()));
  }
  size_t offset = 0;
  for (size_t i = 0; i < entries.size(); ++i) {
    const json& item = list[i];
    const Entry& e = entries[i];
    if (item.value("name", "") != e.name || item.value("kind", "") != e.kind) {
      throw DimensionError("weights: entry " + std::to_string(i) + " is " +
                           item.value("name", "?") + ", store expects " +
                           e.name);
    }
    const std::vector<size_t> shape = item.value("shape", std::vector<size_t>{});
    if (shape != e.tensor->shape()) {
      throw DimensionError("weights: shape mismatch for " + e.name);
    }
    if (item.value("offset", size_t(0)) != offset) {
      throw DimensionError("weights: offset mismatch for " + e.name);
    }
    offset += e.tensor->size();
  }

  std::ifstream bin(path, std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot open: " + path);
  const auto bytes = size_t(bin.tellg());
  if (bytes != offset * sizeof(double)) {
    throw IoError("weights: " + path + " holds " + std::to_string(bytes) +
                  " bytes, manifest describes " +
                  std::to_string(offset * sizeof(double)));
  }
  bin.seekg(0);
  // Tensors are mutated only after every structural check passed.
  for (const Entry& e : entries) {
    bin.read(reinterpret_cast<char*>(e.tensor->ptr()),
             std::streamsize(e.tensor->size() * sizeof(double)));
  }
  if (!bin) throw IoError("read failed: " + path);
}

}  // namespace panokit
