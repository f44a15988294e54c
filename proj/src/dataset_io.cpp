#include "chaosld/dataset_io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace chaosld {

namespace {

const char* kHeader =
    "system,param_alpha,param_sigma,param_beta,param_delta,param_K,energy,"
    "q1,q2,ld_center,D,R,C,S,log10_S,sali_log10,label";

std::string fmt(double v) {
    if (std::isnan(v)) return {};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_field(const std::string& field, const char* column) {
    if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
    const char* begin = field.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + field.size())
        throw DataError(std::string("malformed number in column '") + column +
                        "': " + field);
    return v;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

void write_dataset(const LabeledDataset& dataset,
                   const std::string& csv_path) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + csv_path);
    out << kHeader << '\n';

    for (const auto& r : dataset.records) {
        const SystemSpec& sys = r.system;
        std::string alpha, sigma, beta, delta, k;
        switch (sys.kind) {
        case SystemKind::DoublePendulum:
            alpha = fmt(sys.alpha);
            sigma = fmt(sys.sigma);
            break;
        case SystemKind::FourWell:
            alpha = fmt(sys.alpha);
            beta = fmt(sys.beta);
            delta = fmt(sys.delta);
            break;
        case SystemKind::HenonHeiles:
            break;
        case SystemKind::StandardMap:
            k = fmt(sys.K);
            break;
        }
        out << kind_name(sys.kind) << ',' << alpha << ',' << sigma << ','
            << beta << ',' << delta << ',' << k << ',' << fmt(r.energy) << ','
            << fmt(r.slice[0]) << ',' << fmt(r.slice[1]) << ','
            << fmt(r.ld_center) << ',' << fmt(r.indicators.d) << ','
            << fmt(r.indicators.r) << ',' << fmt(r.indicators.c) << ','
            << fmt(r.indicators.s) << ',' << fmt(r.log10_s) << ','
            << fmt(r.sali_log10) << ','
            << (r.label == Label::Chaotic ? '1' : '0') << '\n';
    }
    if (!out) throw IoError("write failed: " + csv_path);
    out.close();

    nlohmann::json meta;
    meta["spec"] = nlohmann::json::parse(dataset.spec.to_json());
    meta["discarded_count"] = dataset.discarded_count;
    std::ofstream side(csv_path + ".meta.json", std::ios::binary);
    if (!side) throw IoError("cannot open for writing: " + csv_path +
                             ".meta.json");
    side << meta.dump(2) << '\n';
    if (!side) throw IoError("write failed: " + csv_path + ".meta.json");
}

LabeledDataset read_dataset(const std::string& csv_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dataset: " + csv_path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        throw DataError("unexpected dataset header in " + csv_path);

    LabeledDataset ds;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_row(line);
        if (f.size() != 17)
            throw DataError("row " + std::to_string(lineno) + " has " +
                            std::to_string(f.size()) + " fields, expected 17");

        IndicatorRecord r;
        SystemKind kind = kind_from_name(f[0]);
        double alpha = parse_field(f[1], "param_alpha");
        double sigma = parse_field(f[2], "param_sigma");
        double beta = parse_field(f[3], "param_beta");
        double delta = parse_field(f[4], "param_delta");
        double k = parse_field(f[5], "param_K");
        switch (kind) {
        case SystemKind::DoublePendulum:
            r.system = SystemSpec::double_pendulum(alpha, sigma);
            break;
        case SystemKind::FourWell:
            r.system = SystemSpec::four_well(alpha, beta, delta);
            break;
        case SystemKind::HenonHeiles:
            r.system = SystemSpec::henon_heiles();
            break;
        case SystemKind::StandardMap:
            r.system = SystemSpec::standard_map(k);
            break;
        }
        r.energy = parse_field(f[6], "energy");
        r.slice = Vec2(parse_field(f[7], "q1"), parse_field(f[8], "q2"));
        r.ld_center = parse_field(f[9], "ld_center");
        r.indicators.d = parse_field(f[10], "D");
        r.indicators.r = parse_field(f[11], "R");
        r.indicators.c = parse_field(f[12], "C");
        r.indicators.s = parse_field(f[13], "S");
        r.log10_s = parse_field(f[14], "log10_S");
        r.sali_log10 = parse_field(f[15], "sali_log10");
        if (f[16] == "0")
            r.label = Label::Regular;
        else if (f[16] == "1")
            r.label = Label::Chaotic;
        else
            throw DataError("row " + std::to_string(lineno) +
                            ": label must be 0 or 1");
        r.ld_neighbors = {std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN()};
        r.horizon = std::numeric_limits<double>::quiet_NaN();
        ds.records.push_back(std::move(r));
    }

    std::ifstream side(csv_path + ".meta.json", std::ios::binary);
    if (side) {
        std::stringstream buf;
        buf << side.rdbuf();
        nlohmann::json meta = nlohmann::json::parse(buf.str(), nullptr, false);
        if (meta.is_discarded() || !meta.is_object())
            throw DataError("malformed sidecar for " + csv_path);
        if (meta.contains("spec"))
            ds.spec = EnsembleSpec::from_json(meta["spec"].dump());
        ds.discarded_count = meta.value("discarded_count", 0u);
    }
    return ds;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for hashing: " + path);

    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw IoError("digest allocation failed");
    if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("digest init failed");
    }
    char buf[65536];
    while (in) {
        in.read(buf, sizeof buf);
        std::streamsize got = in.gcount();
        if (got > 0 &&
            EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got)) != 1) {
            EVP_MD_CTX_free(ctx);
            throw IoError("digest update failed");
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("digest finalization failed");
    }
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

CachedDataset generate_or_load(const EnsembleSpec& spec,
                               const std::string& csv_path, int threads,
                               bool force_fresh) {
    namespace fs = std::filesystem;
    if (!force_fresh && fs::exists(csv_path) &&
        fs::exists(csv_path + ".meta.json")) {
        try {
            auto ds = read_dataset(csv_path);
            if (ds.spec.to_json() == spec.to_json())
                return {std::move(ds), true, 0.0};
        } catch (const std::exception&) {
            // stale or damaged cache entry: fall through and regenerate
        }
    }
    const auto parent = fs::path(csv_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    const auto t0 = std::chrono::steady_clock::now();
    CachedDataset out{generate_dataset(spec, threads), false, 0.0};
    out.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    write_dataset(out.dataset, csv_path);
    return out;
}

} // namespace chaosld
