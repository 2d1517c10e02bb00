#include "mit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mit {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const std::string& kind,
                     const std::string& config_json,
                     const std::vector<const Tensor<float>*>& state) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + file.string());
    os.write("MITC", 4);
    put_u32(os, 1);
    put_string(os, kind);
    put_string(os, config_json);
    put_u32(os, static_cast<std::uint32_t>(state.size()));
    for (const Tensor<float>* t : state) {
        put_u32(os, static_cast<std::uint32_t>(t->ndim()));
        for (std::size_t d = 0; d < t->ndim(); ++d)
            put_u32(os, static_cast<std::uint32_t>(t->dim(d)));
        os.write(reinterpret_cast<const char*>(t->data()),
                 static_cast<std::streamsize>(t->numel() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + file.string());
}

std::pair<std::string, std::string> read_checkpoint_header(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + file.string());
    char magic[4];
    is.read(magic, 4);
    if (std::string(magic, 4) != "MITC")
        throw std::runtime_error("checkpoint: bad magic in " + file.string());
    if (get_u32(is) != 1) throw std::runtime_error("checkpoint: unsupported version");
    std::string kind = get_string(is);
    std::string config = get_string(is);
    return {std::move(kind), std::move(config)};
}

void load_checkpoint_state(const std::filesystem::path& file, const std::string& expected_kind,
                           const std::vector<Tensor<float>*>& state) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + file.string());
    char magic[4];
    is.read(magic, 4);
    if (std::string(magic, 4) != "MITC")
        throw std::runtime_error("checkpoint: bad magic in " + file.string());
    if (get_u32(is) != 1) throw std::runtime_error("checkpoint: unsupported version");
    const std::string kind = get_string(is);
    if (kind != expected_kind)
        throw std::runtime_error("checkpoint: kind '" + kind + "' where '" + expected_kind +
                                 "' was expected");
    get_string(is);  // config consumed by the caller via read_checkpoint_header
    const std::uint32_t count = get_u32(is);
    if (count != state.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (Tensor<float>* t : state) {
        const std::uint32_t nd = get_u32(is);
        if (nd != t->ndim()) throw std::runtime_error("checkpoint: tensor rank mismatch");
        for (std::size_t d = 0; d < nd; ++d)
            if (get_u32(is) != static_cast<std::uint32_t>(t->dim(d)))
                throw std::runtime_error("checkpoint: tensor shape mismatch");
        is.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(t->numel() * sizeof(float)));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file " + file.string());
}

}  // namespace mit
