#include "mit/dataset.hpp"

#include "mit/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mit {

using nlohmann::json;

DatasetConfig DatasetConfig::desk_scale() {
    DatasetConfig c;
    c.shapes = {
        {PhantomShape::cylinder, 35.0, 3.0, 12.0, 3},
        {PhantomShape::cylinder, 30.0, 2.0, 12.0, 3},
        {PhantomShape::triangular_prism, 40.0, 2.0, 12.0, 3},
    };
    return c;
}

DatasetConfig DatasetConfig::paper_scale() {
    DatasetConfig c;
    c.shapes = {
        {PhantomShape::cylinder, 35.0, 3.0, 4.0, 3},
        {PhantomShape::cylinder, 30.0, 2.0, 4.0, 4},
        {PhantomShape::triangular_prism, 40.0, 2.0, 5.0, 3},
    };
    return c;
}

std::vector<Vec2> enumerate_positions(const Phantom& prototype, double step_mm) {
    if (!(step_mm > 0.0)) throw std::invalid_argument("enumerate_positions: step must be > 0");
    const SensingField field;
    const int n = static_cast<int>(std::floor(field.radius_mm() / step_mm));
    std::vector<Vec2> out;
    Phantom p = prototype;
    for (int i = -n; i <= n; ++i) {
        for (int j = -n; j <= n; ++j) {
            p.position = {i * step_mm, j * step_mm};
            if (p.inside_field(field)) out.push_back(p.position);
        }
    }
    return out;
}

std::vector<Vec2> enumerate_positions(double cylinder_diameter_mm, double step_mm) {
    Phantom p;
    p.shape = PhantomShape::cylinder;
    p.size_mm = cylinder_diameter_mm;
    return enumerate_positions(p, step_mm);
}

Dataset generate(const DatasetConfig& config) {
    if (config.shapes.empty()) throw std::invalid_argument("generate: no shapes configured");
    const TriMesh mesh = build_mesh();

    MaterialMap background = MaterialMap::uniform_background(config.background_sigma);
    background.omega = config.omega();
    const ComplexFrame background_frame = forward(mesh, background);

    Dataset ds;
    ds.manifest.config = config;
    for (std::size_t s = 0; s < config.shapes.size(); ++s) {
        const ShapeSpec& spec = config.shapes[s];
        Phantom proto;
        proto.shape = spec.shape;
        proto.size_mm = spec.size_mm;
        proto.conductivity = spec.conductivity;
        const std::vector<Vec2> positions = enumerate_positions(proto, spec.step_mm);
        for (std::size_t ip = 0; ip < positions.size(); ++ip) {
            Phantom ph = proto;
            ph.position = positions[ip];

            MaterialMap mat = background;
            const TriVector label = rasterize_phantom_to_tri(ph, mesh);
            for (int t = 0; t < kTriCount; ++t)
                if (label[t] != 0.0) mat.sigma[t] = ph.conductivity;

            const ComplexFrame clean = forward(mesh, mat) - background_frame;
            for (int rep = 0; rep < spec.repetitions; ++rep) {
                Sample sample;
                sample.phantom = ph;
                sample.label = label;
                sample.shape_index = static_cast<int>(s);
                sample.position_index = static_cast<int>(ip);
                sample.repetition = rep;
                sample.frame = add_noise(clean, {config.snr_db, derive_seed(config.seed, s, ip, rep)});
                ds.samples.push_back(std::move(sample));
            }
        }
    }
    split_by_position(ds, config.split, config.seed);
    return ds;
}

Tensor<double> flatten(const ComplexFrame& frame) {
    Tensor<double> m({16, 32});
    for (int e = 0; e < 16; ++e) {
        for (int s = 0; s < 16; ++s) {
            m.at2(e, s) = frame.at(e, s).real();
            m.at2(e, s + 16) = frame.at(e, s).imag();
        }
    }
    return m;
}

ComplexFrame unflatten(const Tensor<double>& m) {
    if (m.ndim() != 2 || m.dim(0) != 16 || m.dim(1) != 32)
        throw std::invalid_argument("unflatten: expected a 16x32 matrix");
    ComplexFrame f;
    for (int e = 0; e < 16; ++e)
        for (int s = 0; s < 16; ++s) f.at(e, s) = Complex(m.at2(e, s), m.at2(e, s + 16));
    return f;
}

void split_by_position(Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw std::invalid_argument("split: ratios must sum to 1");

    // unique (shape, position) keys in first-seen order
    std::vector<std::pair<int, int>> keys;
    for (const Sample& s : dataset.samples) {
        const std::pair<int, int> k{s.shape_index, s.position_index};
        if (keys.empty() || keys.back() != k) keys.push_back(k);
    }

    Rng rng(seed ^ 0x73706c6974ULL);  // domain-separated from noise seeding
    std::vector<std::size_t> order(keys.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());

    const std::size_t P = keys.size();
    const std::size_t n_val = static_cast<std::size_t>(std::llround(ratios.val * P));
    const std::size_t n_test = static_cast<std::size_t>(std::llround(ratios.test * P));
    if (n_val + n_test >= P || (ratios.val > 0.0 && n_val == 0) ||
        (ratios.test > 0.0 && n_test == 0))
        throw std::invalid_argument("split: a requested split would be empty");

    enum Bucket : std::uint8_t { train_b, val_b, test_b };
    std::vector<std::uint8_t> bucket_of_key(P, train_b);
    for (std::size_t i = 0; i < n_val; ++i) bucket_of_key[order[i]] = val_b;
    for (std::size_t i = n_val; i < n_val + n_test; ++i) bucket_of_key[order[i]] = test_b;

    auto key_index = [&](const Sample& s) {
        const std::pair<int, int> k{s.shape_index, s.position_index};
        for (std::size_t i = 0; i < keys.size(); ++i)
            if (keys[i] == k) return i;
        throw std::logic_error("split: unknown position key");
    };

    dataset.manifest.train_indices.clear();
    dataset.manifest.val_indices.clear();
    dataset.manifest.test_indices.clear();
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        switch (bucket_of_key[key_index(dataset.samples[i])]) {
            case train_b: dataset.manifest.train_indices.push_back(i); break;
            case val_b: dataset.manifest.val_indices.push_back(i); break;
            case test_b: dataset.manifest.test_indices.push_back(i); break;
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

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

void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

float get_f32(std::istream& is) {
    const std::uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

json shape_to_json(const ShapeSpec& s) {
    return json{{"shape", s.shape == PhantomShape::cylinder ? "cylinder" : "prism"},
                {"size_mm", s.size_mm},
                {"conductivity", s.conductivity},
                {"step_mm", s.step_mm},
                {"repetitions", s.repetitions}};
}

ShapeSpec shape_from_json(const json& j) {
    ShapeSpec s;
    for (const char* key : {"shape", "size_mm", "conductivity"})
        if (!j.contains(key))
            throw std::invalid_argument(std::string("config: shape entry missing key '") + key +
                                        "'");
    const std::string kind = j.at("shape").get<std::string>();
    if (kind == "cylinder")
        s.shape = PhantomShape::cylinder;
    else if (kind == "prism")
        s.shape = PhantomShape::triangular_prism;
    else
        throw std::invalid_argument("config: unknown shape '" + kind + "'");
    s.size_mm = j.at("size_mm").get<double>();
    s.conductivity = j.at("conductivity").get<double>();
    s.step_mm = j.value("step_mm", 12.0);
    s.repetitions = j.value("repetitions", 3);
    return s;
}

json config_to_json_obj(const DatasetConfig& c) {
    json shapes = json::array();
    for (const auto& s : c.shapes) shapes.push_back(shape_to_json(s));
    return json{{"shapes", shapes},
                {"background_sigma", c.background_sigma},
                {"frequency_hz", c.frequency_hz},
                {"snr_db", c.snr_db},
                {"seed", c.seed},
                {"split",
                 {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}}};
}

DatasetConfig config_from_json_obj(const json& j) {
    DatasetConfig c = DatasetConfig::desk_scale();
    if (j.contains("shapes")) {
        c.shapes.clear();
        for (const auto& s : j.at("shapes")) c.shapes.push_back(shape_from_json(s));
    }
    c.background_sigma = j.value("background_sigma", c.background_sigma);
    c.frequency_hz = j.value("frequency_hz", c.frequency_hz);
    c.snr_db = j.value("snr_db", c.snr_db);
    c.seed = j.value("seed", c.seed);
    if (j.contains("split")) {
        const auto& s = j.at("split");
        c.split.train = s.value("train", 0.8);
        c.split.val = s.value("val", 0.1);
        c.split.test = s.value("test", 0.1);
    }
    return c;
}

}  // namespace

std::string dataset_config_to_json(const DatasetConfig& config) {
    return config_to_json_obj(config).dump(2);
}

DatasetConfig dataset_config_from_json(const std::string& text) {
    return config_from_json_obj(json::parse(text));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::ofstream os(dir / "dataset.mitd", std::ios::binary);
    if (!os) throw std::runtime_error("save_dataset: cannot open output file");
    os.write("MITD", 4);
    put_u32(os, dataset.manifest.format_version);
    put_u32(os, static_cast<std::uint32_t>(dataset.samples.size()));
    for (const Sample& s : dataset.samples) {
        if (!s.frame.all_finite())
            throw std::runtime_error("save_dataset: non-finite frame entry");
        for (int e = 0; e < 16; ++e)
            if (s.frame.at(e, e) != Complex(0.0, 0.0))
                throw std::runtime_error("save_dataset: nonzero self-channel");
        const unsigned char shape_id = static_cast<unsigned char>(s.phantom.shape);
        os.write(reinterpret_cast<const char*>(&shape_id), 1);
        put_f32(os, static_cast<float>(s.phantom.size_mm));
        put_f32(os, static_cast<float>(s.phantom.conductivity));
        put_f32(os, static_cast<float>(s.phantom.position.x));
        put_f32(os, static_cast<float>(s.phantom.position.y));
        put_f32(os, static_cast<float>(s.phantom.orientation_rad));
        for (int e = 0; e < 16; ++e)
            for (int c = 0; c < 16; ++c) put_f32(os, static_cast<float>(s.frame.at(e, c).real()));
        for (int e = 0; e < 16; ++e)
            for (int c = 0; c < 16; ++c) put_f32(os, static_cast<float>(s.frame.at(e, c).imag()));
        for (int t = 0; t < kTriCount; ++t) put_f32(os, static_cast<float>(s.label[t]));
    }
    os.close();

    json manifest{{"format_version", dataset.manifest.format_version},
                  {"config", config_to_json_obj(dataset.manifest.config)},
                  {"splits",
                   {{"train", dataset.manifest.train_indices},
                    {"val", dataset.manifest.val_indices},
                    {"test", dataset.manifest.test_indices}}},
                  {"sample_count", dataset.samples.size()}};
    std::ofstream ms(dir / "manifest.json");
    ms << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "dataset.mitd", std::ios::binary);
    if (!is) throw std::runtime_error("load_dataset: missing dataset.mitd in " + dir.string());
    char magic[4];
    is.read(magic, 4);
    if (std::string(magic, 4) != "MITD") throw std::runtime_error("load_dataset: bad magic");
    Dataset ds;
    ds.manifest.format_version = get_u32(is);
    if (ds.manifest.format_version != 1)
        throw std::runtime_error("load_dataset: unsupported format version");
    const std::uint32_t count = get_u32(is);
    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        unsigned char shape_id;
        is.read(reinterpret_cast<char*>(&shape_id), 1);
        s.phantom.shape = static_cast<PhantomShape>(shape_id);
        s.phantom.size_mm = get_f32(is);
        s.phantom.conductivity = get_f32(is);
        s.phantom.position.x = get_f32(is);
        s.phantom.position.y = get_f32(is);
        s.phantom.orientation_rad = get_f32(is);
        std::vector<float> re(256), im(256);
        for (auto& v : re) v = get_f32(is);
        for (auto& v : im) v = get_f32(is);
        for (int i = 0; i < 256; ++i) s.frame.m[i] = Complex(re[i], im[i]);
        s.label.resize(kTriCount);
        for (int t = 0; t < kTriCount; ++t) s.label[t] = get_f32(is);
    }
    if (!is) throw std::runtime_error("load_dataset: truncated file");

    std::ifstream ms(dir / "manifest.json");
    if (!ms) throw std::runtime_error("load_dataset: missing manifest.json");
    json manifest = json::parse(ms);
    ds.manifest.config = config_from_json_obj(manifest.at("config"));
    ds.manifest.train_indices =
        manifest.at("splits").at("train").get<std::vector<std::uint32_t>>();
    ds.manifest.val_indices = manifest.at("splits").at("val").get<std::vector<std::uint32_t>>();
    ds.manifest.test_indices = manifest.at("splits").at("test").get<std::vector<std::uint32_t>>();

    // rebuild bookkeeping fields (not stored in the binary container)
    int shape_idx = -1, pos_idx = -1, rep = 0;
    double last_size = -1.0;
    int last_shape = -1;
    Vec2 last_pos{1e18, 1e18};
    for (auto& s : ds.samples) {
        const int sh = static_cast<int>(s.phantom.shape);
        if (sh != last_shape || s.phantom.size_mm != last_size) {
            ++shape_idx;
            pos_idx = -1;
            last_shape = sh;
            last_size = s.phantom.size_mm;
            last_pos = {1e18, 1e18};
        }
        if (s.phantom.position.x != last_pos.x || s.phantom.position.y != last_pos.y) {
            ++pos_idx;
            rep = 0;
            last_pos = s.phantom.position;
        }
        s.shape_index = shape_idx;
        s.position_index = pos_idx;
        s.repetition = rep++;
    }
    return ds;
}

std::string shape_class_name(const Phantom& phantom) {
    if (phantom.shape == PhantomShape::triangular_prism) return "PR";
    return "CY-" + std::to_string(static_cast<int>(std::lround(phantom.size_mm)));
}

}  // namespace mit
