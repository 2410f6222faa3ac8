#include "pgdiff/io.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pgdiff {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'G', 'D', 'C'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    const std::uint8_t* take(std::size_t n, const char* what) {
        need(n, what);
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointTruncatedError(std::string("checkpoint truncated while reading ") + what);
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& path, const std::string& text) {
    write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

Tensor round_to_float(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.values()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

void save_tensor(const fs::path& path, const Tensor& t, const Json& provenance) {
    const Json header{{"shape", t.shape()}, {"dtype", "float32"}, {"provenance", provenance}};
    const std::string line = header.dump() + "\n";
    std::vector<std::uint8_t> bytes(line.begin(), line.end());
    bytes.reserve(bytes.size() + 4 * t.size());
    for (double v : t.values()) put(bytes, static_cast<float>(v));
    write_bytes(path, bytes);
}

LoadedTensor load_tensor(const fs::path& path) {
    const auto bytes = read_bytes(path);
    const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
    if (nl == bytes.end()) throw IoError(path.string() + ": missing tensor header line");
    Json header;
    try {
        header = Json::parse(bytes.begin(), nl);
    } catch (const Json::parse_error&) {
        throw IoError(path.string() + ": tensor header is not JSON");
    }
    if (!header.contains("shape") || header.value("dtype", "") != "float32") {
        throw IoError(path.string() + ": tensor header must declare shape and dtype float32");
    }
    const Shape shape = header["shape"].get<Shape>();
    std::size_t count = 1;
    for (int d : shape) {
        if (d < 0) throw IoError(path.string() + ": negative dimension");
        count *= static_cast<std::size_t>(d);
    }
    const std::size_t offset = static_cast<std::size_t>(nl - bytes.begin()) + 1;
    if (bytes.size() - offset != 4 * count) throw IoError(path.string() + ": payload length does not match shape");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + offset + 4 * i, 4);
        values[i] = f;
    }
    return {Tensor(shape, std::move(values)), header.value("provenance", Json::object())};
}

void save_pgm(const fs::path& path, const ClassMask& mask) {
    const std::string head = "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
    std::vector<std::uint8_t> bytes(head.begin(), head.end());
    bytes.insert(bytes.end(), mask.labels().begin(), mask.labels().end());
    write_bytes(path, bytes);
}

ClassMask load_pgm(const fs::path& path, int classes) {
    const auto bytes = read_bytes(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
        return tok;
    };
    if (token() != "P5") throw IoError(path.string() + ": not a binary PGM");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw IoError(path.string() + ": unsupported PGM header");
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos || bytes.size() - pos != static_cast<std::size_t>(w) * h) {
        throw IoError(path.string() + ": PGM payload length mismatch");
    }
    ClassMask mask(h, w, classes, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()));
    mask.validate();
    return mask;
}

void save_mask_png(const fs::path& path, const ClassMask& mask) {
    static constexpr std::uint8_t palette[][3] = {{0, 0, 0}, {220, 30, 30}, {255, 150, 0}};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(mask.width()), static_cast<png_uint_32>(mask.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(mask.width()) * 3);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const int label = mask.at(y, x);
            const auto& c = palette[label < 3 ? label : 0];
            std::memcpy(&row[static_cast<std::size_t>(x) * 3], c, 3);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

std::vector<std::uint8_t> serialize_checkpoint(const DenoiserParams& params, const CheckpointMeta& meta) {
    Json names = Json::array();
    for (const auto& p : params.layout()) names.push_back({{"name", p.name}, {"shape", p.shape}});
    const Json header{{"version", kCheckpointVersion}, {"model", to_json(params.config())},
                      {"schedule", {{"betas", meta.betas}}}, {"seed", meta.seed},
                      {"epoch", meta.epoch}, {"loss", meta.loss},
                      {"parameters", names}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put(out, kCheckpointVersion);
    put(out, static_cast<std::uint64_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put(out, static_cast<std::uint64_t>(params.count() * sizeof(float)));
    for (float v : params.values()) put(out, v);
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    const std::uint8_t* magic = r.take(4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
    }
    const auto header_len = r.get<std::uint64_t>("header length");
    if (header_len > r.remaining()) throw CheckpointTruncatedError("checkpoint truncated inside the header");
    const std::uint8_t* htext = r.take(static_cast<std::size_t>(header_len), "header");
    Json header;
    try {
        header = Json::parse(htext, htext + header_len);
    } catch (const Json::parse_error&) {
        throw CheckpointError("checkpoint header is not valid JSON");
    }
    Checkpoint ck;
    std::vector<std::pair<std::string, Shape>> declared;
    try {
        if (header.at("version").get<std::uint32_t>() != version) {
            throw CheckpointVersionError("checkpoint header version disagrees with the file version");
        }
        std::vector<std::string> problems;
        const DenoiserConfig cfg = denoiser_config_from_json(header.at("model"), problems, "model");
        if (!problems.empty()) throw CheckpointError("checkpoint model config invalid: " + problems.front());
        cfg.validate();
        ck.params = DenoiserParams(cfg);
        ck.meta.betas = header.at("schedule").at("betas").get<std::vector<double>>();
        ck.meta.seed = header.at("seed").get<std::uint64_t>();
        ck.meta.epoch = header.at("epoch").get<int>();
        ck.meta.loss = header.at("loss").get<double>();
        for (const auto& p : header.at("parameters")) {
            declared.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
        }
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint header incomplete: ") + e.what());
    }
    const auto& layout = ck.params.layout();
    std::size_t declared_count = 0;
    for (const auto& [name, shape] : declared) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(std::max(d, 0));
        declared_count += n;
    }
    bool same_layout = declared.size() == layout.size();
    for (std::size_t i = 0; same_layout && i < layout.size(); ++i) {
        same_layout = declared[i].first == layout[i].name && declared[i].second == layout[i].shape;
    }
    if (!same_layout) throw CheckpointLengthError("declared parameter shapes do not match the model config");
    const auto payload_len = r.get<std::uint64_t>("payload length");
    if (payload_len != declared_count * sizeof(float)) {
        throw CheckpointLengthError("payload length " + std::to_string(payload_len) + " disagrees with declared shapes (" +
                                    std::to_string(declared_count * sizeof(float)) + " bytes)");
    }
    if (r.remaining() < payload_len) throw CheckpointTruncatedError("checkpoint truncated inside the payload");
    if (r.remaining() > payload_len) throw CheckpointLengthError("trailing bytes after the checkpoint payload");
    const std::uint8_t* payload = r.take(static_cast<std::size_t>(payload_len), "payload");
    std::memcpy(ck.params.values().data(), payload, static_cast<std::size_t>(payload_len));
    return ck;
}

void save_checkpoint(const fs::path& path, const DenoiserParams& params, const CheckpointMeta& meta) {
    write_bytes(path, serialize_checkpoint(params, meta));
}

Checkpoint load_checkpoint(const fs::path& path) { return deserialize_checkpoint(read_bytes(path)); }

void save_dataset(const fs::path& dir, const Dataset& d, const SceneConfig& cfg, std::uint64_t seed) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    Json splits = Json::object();
    auto store = [&](const std::vector<Sample>& split, const char* name) {
        Json ids = Json::array();
        for (const auto& s : split) {
            save_tensor(dir / "images" / (s.id + ".tensor"), s.image, Json{{"kind", "image"}, {"id", s.id}});
            save_pgm(dir / "masks" / (s.id + ".pgm"), s.mask);
            ids.push_back(s.id);
        }
        splits[name] = ids;
    };
    store(d.train, "train");
    store(d.val, "val");
    store(d.test, "test");
    const Json manifest{{"scene", to_json(cfg)}, {"seed", seed}, {"splits", splits}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

StoredDataset load_dataset(const fs::path& dir) {
    Json manifest;
    try {
        manifest = Json::parse(read_text(dir / "manifest.json"));
    } catch (const Json::parse_error&) {
        throw IoError((dir / "manifest.json").string() + ": not valid JSON");
    }
    StoredDataset out;
    std::vector<std::string> problems;
    out.config = scene_config_from_json(manifest.at("scene"), problems, "manifest.scene");
    if (!problems.empty()) throw ConfigError(problems);
    out.seed = manifest.at("seed").get<std::uint64_t>();
    auto load_split = [&](const char* name, std::vector<Sample>& split) {
        for (const auto& id : manifest.at("splits").at(name)) {
            Sample s;
            s.id = id.get<std::string>();
            s.image = load_tensor(dir / "images" / (s.id + ".tensor")).tensor;
            s.mask = load_pgm(dir / "masks" / (s.id + ".pgm"), kCellClasses);
            split.push_back(std::move(s));
        }
    };
    load_split("train", out.data.train);
    load_split("val", out.data.val);
    load_split("test", out.data.test);
    return out;
}

}  // namespace pgdiff
