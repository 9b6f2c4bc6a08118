#include "fgr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fgr {

namespace {

constexpr char kMagic[8] = {'F', 'G', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("load_checkpoint: truncated file");
    return v;
}

void put_str(std::ofstream& out, const std::string& s) {
    put<std::uint32_t>(out, std::uint32_t(s.size()));
    out.write(s.data(), std::streamsize(s.size()));
}

std::string get_str(std::ifstream& in) {
    auto len = get<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("load_checkpoint: truncated string");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    put(out, kVersion);
    put_str(out, model.arch);
    put(out, std::uint32_t(model.num_classes));
    put(out, std::uint32_t(model.in_c));
    put(out, std::uint32_t(model.in_h));
    put(out, std::uint32_t(model.in_w));
    put(out, std::uint32_t(model.in_dim));
    put(out, std::uint32_t(model.params.size()));
    for (const auto& p : model.params) {
        put_str(out, p.name);
        put<std::uint8_t>(out, p.group == ParamGroup::Head ? 1 : 0);
        put(out, std::uint32_t(p.value.ndim()));
        for (auto d : p.value.shape) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  std::streamsize(p.value.size() * sizeof(double)));
    }
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (get<std::uint32_t>(in) != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version");
    ModelParams m;
    m.arch = get_str(in);
    m.num_classes = get<std::uint32_t>(in);
    m.in_c = get<std::uint32_t>(in);
    m.in_h = get<std::uint32_t>(in);
    m.in_w = get<std::uint32_t>(in);
    m.in_dim = get<std::uint32_t>(in);
    auto count = get<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamEntry p;
        p.name = get_str(in);
        p.group = get<std::uint8_t>(in) ? ParamGroup::Head : ParamGroup::Backbone;
        auto nd = get<std::uint32_t>(in);
        std::vector<std::size_t> shape(nd);
        for (auto& d : shape) d = std::size_t(get<std::uint64_t>(in));
        p.value = Tensor(shape);
        in.read(reinterpret_cast<char*>(p.value.data.data()),
                std::streamsize(p.value.size() * sizeof(double)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data");
        m.params.push_back(std::move(p));
    }
    m.sort_by_name();
    return m;
}

}  // namespace fgr
