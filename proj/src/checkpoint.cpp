#include "demea/checkpoint.hpp"

#include <fstream>
#include <map>
#include <string>

#include "demea/binary_io.hpp"
#include "demea/error.hpp"

namespace demea {
namespace {

constexpr char kMagic[6] = {'D', 'E', 'M', 'E', 'A', '\0'};

struct Record {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

void write_header(std::ostream& out) {
  out.write(kMagic, sizeof kMagic);
  binary::write_u32(out, kCheckpointVersion);
}

template <typename Real>
void write_record(std::ostream& out, const std::string& name, const std::vector<std::uint32_t>& shape,
                  const std::vector<Real>& data) {
  binary::write_string(out, name);
  binary::write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) binary::write_u32(out, d);
  for (Real x : data) binary::write_f32(out, static_cast<float>(x));
}

std::map<std::string, Record> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic)) {
    throw IoError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = binary::read_u32(in);
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, Record> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::string name = binary::read_string(in);
    Record r;
    const std::uint32_t rank = binary::read_u32(in);
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(binary::read_u32(in));
      count *= r.shape.back();
    }
    r.data.resize(count);
    for (float& x : r.data) x = binary::read_f32(in);
    records.emplace(name, std::move(r));
  }
  return records;
}

const Record& lookup(const std::map<std::string, Record>& records, const std::string& name,
                     const std::vector<std::uint32_t>& shape, const std::filesystem::path& path) {
  auto it = records.find(name);
  if (it == records.end()) throw IoError(path.string() + ": missing parameter " + name);
  if (it->second.shape != shape) throw ShapeError(path.string() + ": shape mismatch for " + name);
  return it->second;
}

}  // namespace

std::filesystem::path adam_state_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".adam");
}

template <typename Real>
void save_checkpoint(const ParameterStore<Real>& store, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    write_header(out);
    for (std::size_t i = 0; i < store.size(); ++i) write_record(out, store[i].name, store[i].shape, store[i].value);
    if (!out) throw IoError("write failed: " + path.string());
  }
  std::ofstream out(adam_state_path(path), std::ios::binary);
  if (!out) throw IoError("cannot write " + adam_state_path(path).string());
  write_header(out);
  for (std::size_t i = 0; i < store.size(); ++i) {
    write_record(out, store[i].name + ".m", store[i].shape, store[i].m);
    write_record(out, store[i].name + ".v", store[i].shape, store[i].v);
  }
  write_record(out, "adam.step", {1}, std::vector<float>{static_cast<float>(store.step())});
  if (!out) throw IoError("write failed: " + adam_state_path(path).string());
}

template <typename Real>
void load_checkpoint(ParameterStore<Real>& store, const std::filesystem::path& path) {
  const auto records = read_file(path);
  if (records.size() != store.size()) {
    throw IoError(path.string() + ": checkpoint has " + std::to_string(records.size()) + " parameters, model has " +
                  std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Record& r = lookup(records, store[i].name, store[i].shape, path);
    for (std::size_t k = 0; k < r.data.size(); ++k) store[i].value[k] = static_cast<Real>(r.data[k]);
  }
  const auto adam_path = adam_state_path(path);
  if (!std::filesystem::exists(adam_path)) return;
  const auto moments = read_file(adam_path);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Record& m = lookup(moments, store[i].name + ".m", store[i].shape, adam_path);
    const Record& v = lookup(moments, store[i].name + ".v", store[i].shape, adam_path);
    for (std::size_t k = 0; k < m.data.size(); ++k) {
      store[i].m[k] = static_cast<Real>(m.data[k]);
      store[i].v[k] = static_cast<Real>(v.data[k]);
    }
  }
  store.set_step(static_cast<std::uint64_t>(lookup(moments, "adam.step", {1}, adam_path).data[0]));
}

template void save_checkpoint(const ParameterStore<float>&, const std::filesystem::path&);
template void save_checkpoint(const ParameterStore<double>&, const std::filesystem::path&);
template void load_checkpoint(ParameterStore<float>&, const std::filesystem::path&);
template void load_checkpoint(ParameterStore<double>&, const std::filesystem::path&);

}  // namespace demea
