#include "catseq/nn/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "catseq/error.hpp"

namespace catseq::nn {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written in host byte order, which must be little-endian");

namespace {

constexpr char kMagic[8] = {'C', 'S', 'Q', 'T', 'E', 'N', 'S', '1'};

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) {
    fail(ErrorKind::kParse, "truncated tensor file");
  }
  return value;
}

}  // namespace

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Tensor normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Var& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) {
    fail(ErrorKind::kInvalidArgument, "duplicate parameter '" + name + "'");
  }
  entries_.emplace_back(name, Var::parameter(std::move(init)));
  return entries_.back().second;
}

const Var& ParamStore::get(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return v;
  }
  fail(ErrorKind::kInvalidArgument, "no parameter '" + name + "'");
}

Var& ParamStore::get(const std::string& name) {
  return const_cast<Var&>(static_cast<const ParamStore&>(*this).get(name));
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& entry : entries_) {
    if (entry.first == name) return true;
  }
  return false;
}

std::vector<Var> ParamStore::all() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& entry : entries_) out.push_back(entry.second);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& entry : entries_) n += entry.second.value().size();
  return n;
}

const Tensor& TensorFile::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  fail(ErrorKind::kParse, "tensor file has no entry '" + name + "'");
}

void save_tensors(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors,
                  const nlohmann::json& header) {
  const auto bin_path = with_suffix(stem, ".bin");
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) {
    fail(ErrorKind::kIo, "cannot write '" + bin_path.string() + "'");
  }
  bin.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(bin, static_cast<std::uint32_t>(tensors.size()));
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& t : tensors) {
    write_pod<std::uint32_t>(bin, static_cast<std::uint32_t>(t.name.size()));
    bin.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod<std::uint32_t>(bin, static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) write_pod<std::uint64_t>(bin, d);
    const auto offset = static_cast<std::uint64_t>(bin.tellp());
    bin.write(reinterpret_cast<const char*>(t.tensor.data()),
              static_cast<std::streamsize>(t.tensor.size() * sizeof(double)));
    manifest.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
  }
  if (!bin) {
    fail(ErrorKind::kIo, "failed writing '" + bin_path.string() + "'");
  }

  nlohmann::json doc;
  doc["format"] = "catseq-tensors";
  doc["version"] = 1;
  doc["header"] = header;
  doc["tensors"] = std::move(manifest);
  const auto json_path = with_suffix(stem, ".json");
  std::ofstream js(json_path);
  if (!js) {
    fail(ErrorKind::kIo, "cannot write '" + json_path.string() + "'");
  }
  js << doc.dump(2) << '\n';
}

TensorFile load_tensors(const std::filesystem::path& stem) {
  const auto json_path = with_suffix(stem, ".json");
  std::ifstream js(json_path);
  if (!js) {
    fail(ErrorKind::kIo, "cannot open '" + json_path.string() + "'");
  }
  nlohmann::json doc;
  try {
    js >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "malformed tensor manifest: " + std::string(e.what()));
  }
  if (doc.value("format", "") != "catseq-tensors") {
    fail(ErrorKind::kParse, "'" + json_path.string() + "' is not a tensor manifest");
  }

  const auto bin_path = with_suffix(stem, ".bin");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) {
    fail(ErrorKind::kIo, "cannot open '" + bin_path.string() + "'");
  }
  char magic[sizeof(kMagic)];
  bin.read(magic, sizeof(magic));
  if (!bin || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::kParse, "bad magic in '" + bin_path.string() + "'");
  }
  TensorFile file;
  file.header = doc.at("header");
  const auto count = read_pod<std::uint32_t>(bin);
  const auto& manifest = doc.at("tensors");
  if (manifest.size() != count) {
    fail(ErrorKind::kParse, "tensor manifest and binary disagree on tensor count");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(bin);
    std::string name(name_len, '\0');
    bin.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(bin);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(bin));
    Tensor t(shape);
    bin.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!bin) {
      fail(ErrorKind::kParse, "truncated tensor file '" + bin_path.string() + "'");
    }
    if (manifest[i].at("name").get<std::string>() != name ||
        manifest[i].at("shape").get<Shape>() != shape) {
      fail(ErrorKind::kParse, "tensor manifest entry " + std::to_string(i) +
                                  " does not match the binary");
    }
    file.tensors.push_back({std::move(name), std::move(t)});
  }
  return file;
}

void save_params(const std::filesystem::path& stem, const ParamStore& params,
                 const nlohmann::json& header) {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, var] : params.entries()) {
    tensors.push_back({name, var.value()});
  }
  save_tensors(stem, tensors, header);
}

nlohmann::json load_params(const std::filesystem::path& stem, ParamStore& params) {
  auto file = load_tensors(stem);
  if (file.tensors.size() != params.entries().size()) {
    fail(ErrorKind::kSchema, "parameter file holds " + std::to_string(file.tensors.size()) +
                                 " tensors, model expects " +
                                 std::to_string(params.entries().size()));
  }
  for (auto& t : file.tensors) {
    Var& target = params.get(t.name);
    if (!target.value().same_shape(t.tensor)) {
      fail(ErrorKind::kSchema, "parameter '" + t.name + "' has shape " +
                                   shape_string(t.tensor.shape()) + ", model expects " +
                                   shape_string(target.shape()));
    }
    target.value() = std::move(t.tensor);
    target.zero_grad();
  }
  return file.header;
}

}  // namespace catseq::nn
