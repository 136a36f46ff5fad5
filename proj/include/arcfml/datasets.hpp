// datasets.hpp - per-node labeled symbol datasets: synthesis, splits and the UWDS file format

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "arcfml/binary_io.hpp"
#include "arcfml/cdnn.hpp"
#include "arcfml/chirp_phy.hpp"
#include "arcfml/error.hpp"
#include "arcfml/rng.hpp"
#include "arcfml/uwa_channel.hpp"

namespace arcfml::data {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool degenerate() const { return lo == hi; }
    bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }

    double draw(Rng& rng) const {
        if (degenerate()) return lo;
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }

    void validate(const char* name) const {
        if (std::isnan(lo) || std::isnan(hi) || !(lo <= hi))
            throw ConfigError(std::string("dataset: range ") + name + " must satisfy lo <= hi");
    }

    bool operator==(const Interval&) const = default;
};

/// Channel tags: "identity", "rayleigh", "rotate:<degrees>", "cir:<path>".
struct DatasetSpec {
    phy::ChirpParams chirp;  // chirp.lambda is the dataset's downsampling factor
    std::size_t symbols = 1250;
    double train_fraction = 0.8;
    Interval ebn0_db{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    Interval sto_samples{0.0, 0.0};
    Interval rel_speed{0.0, 0.0};
    double sound_speed = 1500.0;
    std::string channel = "identity";
    channel::RayleighModelConfig rayleigh;
    bool frame_coherent = false;  // one channel and impairment draw per node instead of per symbol
    std::uint64_t seed = 0;

    std::size_t n_train() const {
        return static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(symbols)));
    }
    std::size_t n_test() const { return symbols - n_train(); }

    void validate() const {
        chirp.validate();
        if (symbols == 0) throw ConfigError("dataset: symbols must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("dataset: train_fraction must lie in (0, 1]");
        if (n_train() == 0) throw ConfigError("dataset: split leaves the train part empty");
        if (n_test() == 0 && train_fraction < 1.0) throw ConfigError("dataset: split leaves the test part empty");
        ebn0_db.validate("ebn0_db");
        sto_samples.validate("sto_samples");
        rel_speed.validate("rel_speed");
        if (ebn0_db.lo == -std::numeric_limits<double>::infinity()) throw ConfigError("dataset: ebn0_db must be > -inf");
        const double n = static_cast<double>(chirp.samples_per_symbol());
        if (!(std::abs(sto_samples.lo) < n && std::abs(sto_samples.hi) < n))
            throw ConfigError("dataset: |sto_samples| must be below the symbol length");
        if (!(sound_speed > 0.0)) throw ConfigError("dataset: sound_speed must be > 0");
        if (!(std::abs(rel_speed.lo) < sound_speed && std::abs(rel_speed.hi) < sound_speed))
            throw ConfigError("dataset: |rel_speed| must be below sound_speed");
        parse_channel_tag(channel);
        rayleigh.validate();
    }

    struct ChannelTag {
        std::string kind;
        double degrees = 0.0;
        std::string path;
    };

    static ChannelTag parse_channel_tag(const std::string& tag) {
        if (tag == "identity" || tag == "rayleigh") return {tag, 0.0, {}};
        if (tag.rfind("rotate:", 0) == 0) {
            const std::string v = tag.substr(7);
            char* end = nullptr;
            const double deg = std::strtod(v.c_str(), &end);
            if (v.empty() || *end != '\0' || !std::isfinite(deg)) throw ConfigError("dataset: bad rotation tag: " + tag);
            return {"rotate", deg, {}};
        }
        if (tag.rfind("cir:", 0) == 0 && tag.size() > 4) return {"cir", 0.0, tag.substr(4)};
        throw ConfigError("dataset: unknown channel tag: " + tag);
    }
};

inline nlohmann::json to_json(const DatasetSpec& s) {
    auto iv = [](const Interval& i) {
        auto num = [](double v) -> nlohmann::json {
            if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
            return v;
        };
        return nlohmann::json::array({num(i.lo), num(i.hi)});
    };
    return {
        {"f1", s.chirp.f1}, {"f2", s.chirp.f2}, {"T", s.chirp.T}, {"fs", s.chirp.fs}, {"phi0", s.chirp.phi0},
        {"lambda", s.chirp.lambda}, {"symbols", s.symbols}, {"train_fraction", s.train_fraction},
        {"ebn0_db", iv(s.ebn0_db)}, {"sto_samples", iv(s.sto_samples)}, {"rel_speed", iv(s.rel_speed)},
        {"sound_speed", s.sound_speed}, {"channel", s.channel},
        {"rayleigh", {{"max_excess_delay", s.rayleigh.max_excess_delay}, {"decay_db_per_tap", s.rayleigh.decay_db_per_tap},
                      {"fd", s.rayleigh.fd}, {"a", s.rayleigh.a}, {"Ts", s.rayleigh.Ts}}},
        {"frame_coherent", s.frame_coherent}, {"seed", s.seed},
    };
}

inline DatasetSpec spec_from_json(const nlohmann::json& j) {
    auto num = [](const nlohmann::json& v) -> double {
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "inf") return std::numeric_limits<double>::infinity();
            if (s == "-inf") return -std::numeric_limits<double>::infinity();
            throw ConfigError("dataset spec: bad number " + s);
        }
        return v.get<double>();
    };
    auto iv = [&](const nlohmann::json& v) { return Interval{num(v.at(0)), num(v.at(1))}; };
    try {
        DatasetSpec s;
        s.chirp.f1 = j.at("f1");
        s.chirp.f2 = j.at("f2");
        s.chirp.T = j.at("T");
        s.chirp.fs = j.at("fs");
        s.chirp.phi0 = j.at("phi0");
        s.chirp.lambda = j.at("lambda");
        s.symbols = j.at("symbols");
        s.train_fraction = j.at("train_fraction");
        s.ebn0_db = iv(j.at("ebn0_db"));
        s.sto_samples = iv(j.at("sto_samples"));
        s.rel_speed = iv(j.at("rel_speed"));
        s.sound_speed = j.at("sound_speed");
        s.channel = j.at("channel");
        const auto& r = j.at("rayleigh");
        s.rayleigh.max_excess_delay = r.at("max_excess_delay");
        s.rayleigh.decay_db_per_tap = r.at("decay_db_per_tap");
        s.rayleigh.fd = r.at("fd");
        s.rayleigh.a = r.at("a");
        s.rayleigh.Ts = r.at("Ts");
        s.frame_coherent = j.at("frame_coherent");
        s.seed = j.at("seed");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset spec: ") + e.what());
    }
}

struct SymbolRecord {
    std::vector<float> samples;  // N1 downsampled received samples
    std::uint8_t label = 0;
    float snr_db = 0.0f;  // per-sample SNR applied to the received context
    float sto_samples = 0.0f;
    float rel_speed = 0.0f;
    std::string channel;

    bool operator==(const SymbolRecord& o) const {
        auto same = [](float a, float b) { return a == b || (std::isnan(a) && std::isnan(b)); };
        return samples == o.samples && label == o.label && same(snr_db, o.snr_db) && same(sto_samples, o.sto_samples) &&
               same(rel_speed, o.rel_speed) && channel == o.channel;
    }
};

struct NodeDataset {
    DatasetSpec spec;
    std::vector<SymbolRecord> train;
    std::vector<SymbolRecord> test;
};

/// Per-sample SNR (dB) equivalent to Eb/N0 for a unit-amplitude chirp of N samples.
inline double ebn0_to_snr_db(double ebn0_db, std::size_t samples_per_symbol) {
    return ebn0_db + 10.0 * std::log10(2.0 / static_cast<double>(samples_per_symbol));
}

/// Everything drawn for one record, before the channel is applied.
struct RecordDraw {
    std::uint8_t prev = 0, label = 0, next = 0;
    channel::ImpairmentSpec imp;
    channel::ChannelRealization h;
    std::uint64_t noise_seed = 0;
};

namespace detail {

inline channel::ChannelRealization make_channel(const DatasetSpec& s, std::uint64_t seed,
                                                const channel::ChannelRealization* loaded) {
    const auto tag = DatasetSpec::parse_channel_tag(s.channel);
    if (tag.kind == "identity") return channel::ChannelRealization::identity();
    if (tag.kind == "rotate") return channel::ChannelRealization::phase_rotation(tag.degrees * std::numbers::pi / 180.0);
    if (tag.kind == "rayleigh") return channel::rayleigh_cir(s.rayleigh, 3.0 * s.chirp.T, s.chirp.fs, seed);
    return *loaded;
}

}  // namespace detail

/// Deterministic draws for record `index` of a node.
inline RecordDraw draw_record(const DatasetSpec& s, std::size_t index, const channel::ChannelRealization* loaded = nullptr) {
    Rng rng = make_rng(s.seed, {stream::record, index});
    std::bernoulli_distribution coin(0.5);
    RecordDraw d;
    d.label = coin(rng) ? 1 : 0;
    d.prev = coin(rng) ? 1 : 0;
    d.next = coin(rng) ? 1 : 0;
    const std::uint64_t imp_index = s.frame_coherent ? 0 : index;
    Rng irng = make_rng(s.seed, {stream::frame, imp_index});
    const double ebn0 = s.ebn0_db.draw(irng);
    d.imp.snr_db = ebn0_to_snr_db(ebn0, s.chirp.samples_per_symbol());
    d.imp.sto_samples = s.sto_samples.draw(irng);
    d.imp.rel_speed = s.rel_speed.draw(irng);
    d.imp.sound_speed = s.sound_speed;
    d.h = detail::make_channel(s, derive_seed(s.seed, {stream::tap, imp_index}), loaded);
    d.noise_seed = derive_seed(s.seed, {stream::noise, index});
    return d;
}

/// Full-rate received three-symbol context [prev, label, next] for a draw.
inline phy::Waveform received_context(const DatasetSpec& s, const RecordDraw& d, bool noiseless = false) {
    const std::uint8_t bits[3] = {d.prev, d.label, d.next};
    const auto ctx = phy::modulate_frame(bits, s.chirp);
    auto imp = d.imp;
    if (noiseless) imp.snr_db = std::numeric_limits<double>::infinity();
    return channel::apply_channel(ctx, d.h, imp, d.noise_seed);
}

inline SymbolRecord synthesize_record(const DatasetSpec& s, std::size_t index,
                                      const channel::ChannelRealization* loaded = nullptr) {
    const auto d = draw_record(s, index, loaded);
    const auto rx = received_context(s, d);
    const std::size_t n = s.chirp.samples_per_symbol();
    const auto lambda = static_cast<std::size_t>(s.chirp.lambda);
    SymbolRecord r;
    r.label = d.label;
    r.snr_db = static_cast<float>(d.imp.snr_db);
    r.sto_samples = static_cast<float>(d.imp.sto_samples);
    r.rel_speed = static_cast<float>(d.imp.rel_speed);
    r.channel = s.channel;
    r.samples.reserve(n / lambda);
    for (std::size_t k = n; k < 2 * n; k += lambda) r.samples.push_back(static_cast<float>(rx.samples[k]));
    return r;
}

/// Synthesize spec.symbols records; the first n_train() form the train split.
inline NodeDataset build_node_dataset(const DatasetSpec& s) {
    s.validate();
    std::optional<channel::ChannelRealization> loaded;
    const auto tag = DatasetSpec::parse_channel_tag(s.channel);
    if (tag.kind == "cir") loaded = channel::load_cir(tag.path);
    NodeDataset ds{s, {}, {}};
    for (std::size_t i = 0; i < s.symbols; ++i) {
        try {
            auto rec = synthesize_record(s, i, loaded ? &*loaded : nullptr);
            (i < s.n_train() ? ds.train : ds.test).push_back(std::move(rec));
        } catch (const Error& e) {
            throw InputError("record " + std::to_string(i) + ": " + e.what());
        }
    }
    return ds;
}

/// Stack records into a batch; each row is scaled to unit RMS when `normalize` is set.
inline cdnn::LabeledBatch to_batch(const std::vector<SymbolRecord>& recs, bool normalize = true) {
    cdnn::LabeledBatch b;
    if (recs.empty()) return b;
    const auto n1 = static_cast<Eigen::Index>(recs.front().samples.size());
    b.inputs.resize(static_cast<Eigen::Index>(recs.size()), n1);
    b.labels.resize(static_cast<Eigen::Index>(recs.size()));
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        if (static_cast<Eigen::Index>(r.samples.size()) != n1) throw InputError("to_batch: records differ in length");
        double ss = 0.0;
        for (float v : r.samples) ss += static_cast<double>(v) * v;
        const double rms = std::sqrt(ss / static_cast<double>(n1));
        const double scale = (normalize && rms > 0.0) ? 1.0 / rms : 1.0;
        for (Eigen::Index k = 0; k < n1; ++k) b.inputs(static_cast<Eigen::Index>(i), k) = scale * r.samples[static_cast<std::size_t>(k)];
        b.labels[static_cast<Eigen::Index>(i)] = r.label;
    }
    return b;
}

/// Offsets added to each impairment range; `disjoint` demands that every shifted
/// range no longer overlaps its source range.
struct DomainShift {
    Interval ebn0_db{0.0, 0.0};
    Interval sto_samples{0.0, 0.0};
    Interval rel_speed{0.0, 0.0};
    bool disjoint = true;
};

inline DatasetSpec shift_domain(const DatasetSpec& s, const DomainShift& d) {
    DatasetSpec out = s;
    auto shift = [&](const Interval& src, const Interval& delta, Interval& dst, const char* name) {
        if (delta.lo == 0.0 && delta.hi == 0.0) return;
        dst = {src.lo + delta.lo, src.hi + delta.hi};
        dst.validate(name);
        if (d.disjoint && dst.overlaps(src))
            throw ConfigError(std::string("shift_domain: shifted ") + name + " range overlaps the source range");
    };
    shift(s.ebn0_db, d.ebn0_db, out.ebn0_db, "ebn0_db");
    shift(s.sto_samples, d.sto_samples, out.sto_samples, "sto_samples");
    shift(s.rel_speed, d.rel_speed, out.rel_speed, "rel_speed");
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// UWDS file: "UWDS", u16 version, u32 N1, u64 record count, u16 lambda (20 bytes),
// records (f32 x N1, u8 label, f32 snr_db, f32 sto, f32 speed, u16 tag id),
// u32 tag count + (u32 length, bytes) per tag, u64 train count, u32 length + spec JSON.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 20;

inline std::size_t record_bytes(std::size_t n1) { return 4 * n1 + 15; }

inline std::vector<char> encode_dataset(const NodeDataset& ds) {
    io::ByteWriter out;
    const std::size_t n1 = ds.spec.chirp.n1();
    std::vector<std::string> tags;
    auto tag_id = [&](const std::string& t) {
        for (std::size_t i = 0; i < tags.size(); ++i)
            if (tags[i] == t) return static_cast<std::uint16_t>(i);
        if (tags.size() >= 65535) throw InputError("dataset has too many channel tags");
        tags.push_back(t);
        return static_cast<std::uint16_t>(tags.size() - 1);
    };
    out.put_bytes("UWDS");
    out.put_u16(kDatasetVersion);
    out.put_u32(static_cast<std::uint32_t>(n1));
    out.put_u64(ds.train.size() + ds.test.size());
    out.put_u16(static_cast<std::uint16_t>(ds.spec.chirp.lambda));
    for (const auto* part : {&ds.train, &ds.test}) {
        for (const auto& r : *part) {
            if (r.samples.size() != n1) throw InputError("dataset record length does not match N1");
            for (float v : r.samples) out.put_f32(v);
            out.put_u8(r.label);
            out.put_f32(r.snr_db);
            out.put_f32(r.sto_samples);
            out.put_f32(r.rel_speed);
            out.put_u16(tag_id(r.channel));
        }
    }
    out.put_u32(static_cast<std::uint32_t>(tags.size()));
    for (const auto& t : tags) {
        out.put_u32(static_cast<std::uint32_t>(t.size()));
        out.put_bytes(t);
    }
    out.put_u64(ds.train.size());
    const std::string spec = to_json(ds.spec).dump();
    out.put_u32(static_cast<std::uint32_t>(spec.size()));
    out.put_bytes(spec);
    return out.bytes();
}

inline NodeDataset decode_dataset(std::string_view bytes) {
    io::ByteReader in(bytes);
    in.expect_magic("UWDS");
    in.expect_version(kDatasetVersion);
    const auto n1_at = in.offset();
    const std::size_t n1 = in.get_u32("N1");
    if (n1 == 0) throw ParseError("N1 must be positive", n1_at);
    const auto count = in.get_u64("record count");
    const auto lambda_at = in.offset();
    const auto lambda = in.get_u16("lambda");
    if (lambda == 0) throw ParseError("lambda must be positive", lambda_at);
    if (count > in.remaining() / record_bytes(n1)) throw ParseError("truncated payload while reading records", in.offset());

    std::vector<SymbolRecord> recs(count);
    std::vector<std::pair<std::uint16_t, std::size_t>> tag_refs;  // (id, offset)
    for (std::size_t i = 0; i < count; ++i) {
        auto& r = recs[i];
        r.samples.resize(n1);
        for (auto& v : r.samples) v = in.get_f32("sample");
        const auto label_at = in.offset();
        r.label = in.get_u8("label");
        if (r.label > 1) throw ParseError("label must be 0 or 1", label_at);
        r.snr_db = in.get_f32("snr_db");
        r.sto_samples = in.get_f32("sto_samples");
        r.rel_speed = in.get_f32("rel_speed");
        tag_refs.emplace_back(in.get_u16("channel tag id"), in.offset() - 2);
    }
    const auto ntags = in.get_u32("tag count");
    std::vector<std::string> tags;
    for (std::uint32_t t = 0; t < ntags; ++t) {
        const auto len = in.get_u32("tag length");
        tags.push_back(in.get_bytes(len, "tag"));
    }
    for (std::size_t i = 0; i < count; ++i) {
        if (tag_refs[i].first >= tags.size()) throw ParseError("channel tag id out of range", tag_refs[i].second);
        recs[i].channel = tags[tag_refs[i].first];
    }
    const auto train_at = in.offset();
    const auto n_train = in.get_u64("train count");
    if (n_train > count) throw ParseError("train count exceeds record count", train_at);
    const auto spec_len = in.get_u32("spec length");
    const auto spec_at = in.offset();
    const auto spec_text = in.get_bytes(spec_len, "spec");
    if (!in.at_end()) throw ParseError("trailing bytes after dataset spec", in.offset());

    NodeDataset ds;
    try {
        ds.spec = spec_from_json(nlohmann::json::parse(spec_text));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed dataset spec: ") + e.what(), spec_at);
    } catch (const ConfigError& e) {
        throw ParseError(e.what(), spec_at);
    }
    if (ds.spec.chirp.n1() != n1 || ds.spec.chirp.lambda != lambda)
        throw ParseError("header N1/lambda disagree with the stored spec", n1_at);
    ds.train.assign(std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.begin() + static_cast<std::ptrdiff_t>(n_train)));
    ds.test.assign(std::make_move_iterator(recs.begin() + static_cast<std::ptrdiff_t>(n_train)), std::make_move_iterator(recs.end()));
    return ds;
}

inline void save_dataset(const std::string& path, const NodeDataset& ds) { io::write_file(path, encode_dataset(ds)); }
inline NodeDataset load_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace arcfml::data
