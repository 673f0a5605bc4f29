#include "irdet/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "irdet/errors.hpp"

namespace irdet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'I', 'R', 'D', 'E', 'T', 'C', 'K', 'P'};
constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}
void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw TruncatedFileError("checkpoint ends early");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

uint64_t fnv1a(const char* data, std::size_t n) {
    uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int parse_pgm_int(const std::string& buf, std::size_t& pos, const std::string& path) {
    // whitespace and # comments between tokens
    while (pos < buf.size()) {
        const char c = buf[pos];
        if (c == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos])))
        throw FormatError("bad header token in " + path);
    int v = 0;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
        v = v * 10 + (buf[pos] - '0');
        ++pos;
    }
    return v;
}

std::string frame_rel_path(int film_id, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "images/film_%03d/frame_%04d.pgm", film_id, index);
    return buf;
}

} // namespace

void write_pgm16(const Image16& image, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open file for writing: " + path);
    f << "P5\n" << image.cols() << ' ' << image.rows() << "\n65535\n";
    std::string data;
    data.reserve(static_cast<std::size_t>(image.size()) * 2);
    for (Eigen::Index r = 0; r < image.rows(); ++r)
        for (Eigen::Index c = 0; c < image.cols(); ++c) {
            const uint16_t v = image(r, c);
            data.push_back(static_cast<char>(v >> 8));
            data.push_back(static_cast<char>(v & 0xff));
        }
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw FormatError("write failed: " + path);
}

Image16 read_pgm16(const std::string& path) {
    const std::string buf = slurp(path);
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
        throw FormatError("not a binary PGM: " + path);
    std::size_t pos = 2;
    const int w = parse_pgm_int(buf, pos, path);
    const int h = parse_pgm_int(buf, pos, path);
    const int maxval = parse_pgm_int(buf, pos, path);
    if (w <= 0 || h <= 0) throw FormatError("bad dimensions in " + path);
    if (maxval != 65535) throw FormatError("expected 16-bit maxval in " + path);
    if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
        throw FormatError("bad header in " + path);
    ++pos; // single whitespace byte before samples
    const std::size_t need = static_cast<std::size_t>(w) * h * 2;
    if (buf.size() - pos < need) throw TruncatedFileError("pixel data ends early in " + path);
    Image16 img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const auto hi = static_cast<unsigned char>(buf[pos++]);
            const auto lo = static_cast<unsigned char>(buf[pos++]);
            img(r, c) = static_cast<uint16_t>((hi << 8) | lo);
        }
    return img;
}

void write_dataset(const std::vector<Film>& films, const std::string& dir) {
    fs::create_directories(dir);
    json jfilms = json::array();
    for (const auto& film : films) {
        json jframes = json::array();
        for (std::size_t t = 0; t < film.frames.size(); ++t) {
            const std::string rel = frame_rel_path(film.film_id, static_cast<int>(t));
            fs::create_directories((fs::path(dir) / rel).parent_path());
            write_pgm16(film.frames[t], (fs::path(dir) / rel).string());
            json jboxes = json::array();
            for (const auto& b : film.annotations[t])
                jboxes.push_back({{"x", b.box.x},
                                  {"y", b.box.y},
                                  {"w", b.box.w},
                                  {"h", b.box.h},
                                  {"class_id", b.class_id}});
            jframes.push_back({{"index", static_cast<int>(t)},
                               {"image_path", rel},
                               {"boxes", jboxes}});
        }
        jfilms.push_back({{"film_id", film.film_id},
                          {"campaign", film.campaign == Campaign::A ? "A" : "B"},
                          {"frames", jframes}});
    }
    std::ofstream f(fs::path(dir) / "annotations.json");
    if (!f) throw FormatError("cannot write annotations in " + dir);
    f << json{{"films", jfilms}}.dump(1) << '\n';
}

std::vector<Film> read_dataset(const std::string& dir) {
    json doc;
    try {
        doc = json::parse(slurp((fs::path(dir) / "annotations.json").string()));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("annotations.json: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("films") || !doc["films"].is_array())
        throw FormatError("annotations.json: missing films array");
    std::vector<Film> films;
    for (const auto& jf : doc["films"]) {
        Film film;
        film.film_id = jf.at("film_id").get<int>();
        const std::string camp = jf.at("campaign").get<std::string>();
        if (camp != "A" && camp != "B")
            throw ValidationError("annotations.json: unknown campaign " + camp);
        film.campaign = camp == "A" ? Campaign::A : Campaign::B;
        for (const auto& jframe : jf.at("frames")) {
            const std::string rel = jframe.at("image_path").get<std::string>();
            film.frames.push_back(read_pgm16((fs::path(dir) / rel).string()));
            std::vector<GtBox> boxes;
            for (const auto& jb : jframe.at("boxes")) {
                GtBox g;
                g.box = {jb.at("x").get<double>(), jb.at("y").get<double>(),
                         jb.at("w").get<double>(), jb.at("h").get<double>()};
                g.class_id = jb.at("class_id").get<int>();
                if (g.class_id < 1 || g.class_id > kNumClasses)
                    throw ValidationError("annotations.json: class id out of range: " +
                                          std::to_string(g.class_id));
                if (g.box.w <= 0.0 || g.box.h <= 0.0)
                    throw ValidationError("annotations.json: non-positive box size");
                boxes.push_back(g);
            }
            film.annotations.push_back(std::move(boxes));
        }
        films.push_back(std::move(film));
    }
    return films;
}

void save_checkpoint(const std::string& path, const DetectorParams& params,
                     const NormStats& stats) {
    const DetectorConfig& cfg = params.config();
    const json arch = {{"input_height", cfg.input_height},
                       {"input_width", cfg.input_width},
                       {"channels", cfg.channels},
                       {"kernel", cfg.kernel},
                       {"stride", cfg.stride},
                       {"pad", cfg.pad},
                       {"num_classes", cfg.num_classes},
                       {"anchor_size", cfg.anchor_size},
                       {"neg_iou_thresh", cfg.neg_iou_thresh},
                       {"conf_floor", cfg.conf_floor},
                       {"nms_thresh", cfg.nms_thresh}};
    const std::string arch_text = arch.dump();

    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(arch_text.size()));
    out += arch_text;
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (Eigen::Index i = 0; i < params.size(); ++i)
        put_f32(out, static_cast<float>(params.values()[i]));
    put_f64(out, stats.mean);
    put_f64(out, stats.stdev);
    put_u64(out, fnv1a(out.data(), out.size()));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open file for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const std::string buf = slurp(path);
    Reader r{buf};
    const std::string magic = r.bytes(sizeof(kCheckpointMagic));
    if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw FormatError("bad checkpoint magic in " + path);
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw VersionError("unsupported checkpoint version " + std::to_string(version));
    const uint32_t arch_len = r.u32();
    const std::string arch_text = r.bytes(arch_len);
    json arch;
    try {
        arch = json::parse(arch_text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("checkpoint architecture block: ") + e.what());
    }
    DetectorConfig cfg;
    try {
        cfg.input_height = arch.at("input_height").get<int>();
        cfg.input_width = arch.at("input_width").get<int>();
        const auto ch = arch.at("channels");
        if (!ch.is_array() || ch.size() != 3)
            throw FormatError("checkpoint channels must have 3 entries");
        for (int i = 0; i < 3; ++i) cfg.channels[static_cast<std::size_t>(i)] = ch[static_cast<std::size_t>(i)].get<int>();
        cfg.kernel = arch.at("kernel").get<int>();
        cfg.stride = arch.at("stride").get<int>();
        cfg.pad = arch.at("pad").get<int>();
        cfg.num_classes = arch.at("num_classes").get<int>();
        cfg.anchor_size = arch.at("anchor_size").get<double>();
        cfg.neg_iou_thresh = arch.at("neg_iou_thresh").get<double>();
        cfg.conf_floor = arch.at("conf_floor").get<double>();
        cfg.nms_thresh = arch.at("nms_thresh").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint architecture block: ") + e.what());
    }

    DetectorParams params(cfg);
    const uint32_t count = r.u32();
    if (count != static_cast<uint32_t>(params.size()))
        throw FormatError("checkpoint parameter count mismatch");
    for (uint32_t i = 0; i < count; ++i) params.values()[i] = static_cast<double>(r.f32());
    NormStats stats;
    stats.mean = r.f64();
    stats.stdev = r.f64();
    const std::size_t payload = r.pos;
    const uint64_t want = r.u64();
    const uint64_t got = fnv1a(buf.data(), payload);
    if (want != got) throw ChecksumError("checkpoint checksum mismatch in " + path);
    return {std::move(params), stats};
}

} // namespace irdet
