#pragma once

// Synthetic measurement noise and dataset persistence.
//
// Noise model: Phi^delta_i = Phi_i * (1 + delta*(2 r_i - 1)) with r_i uniform
// on [0,1) drawn from splitmix64, a fixed portable 64-bit generator, so that
// identical (Phi, delta, seed) give identical noisy data on every platform.
//
// Dataset file: one JSON header line followed by one line per sensor with the
// coordinates (%.17g) and the clean/noisy values in hex-float, which round-trip
// bit-exactly.

#include "blt/common.hpp"
#include "blt/sensors.hpp"

#include <Eigen/Core>

#include <nlohmann/json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>

namespace blt {

// splitmix64 (Steele, Lea, Flood 2014); state advances by the golden gamma.
struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // 53-bit uniform in [0, 1)
    double uniform01() { return double(next() >> 11) * 0x1.0p-53; }

    // derived generator for an independent substream
    SplitMix64 split() { return SplitMix64(next() ^ 0x5851F42D4C957F2Dull); }
};

inline double noise_factor(double delta, double r) { return 1.0 + delta * (2.0 * r - 1.0); }

struct NoisyData {
    Eigen::VectorXd clean;
    Eigen::VectorXd noisy;
    double delta = 0.0;
    std::uint64_t seed = 0;
};

inline NoisyData add_noise(const Eigen::VectorXd& phi, double delta, std::uint64_t seed) {
    if (delta < 0.0) throw domain_error("add_noise: delta must be >= 0");
    NoisyData d;
    d.clean = phi;
    d.delta = delta;
    d.seed = seed;
    d.noisy.resize(phi.size());
    SplitMix64 rng(seed);
    for (Eigen::Index i = 0; i < phi.size(); ++i) d.noisy[i] = phi[i] * noise_factor(delta, rng.uniform01());
    return d;
}

template <int N>
struct Dataset {
    NoisyData data;
    std::vector<Vec<N>> sensor_points;
    double domain_radius = 0.0;
};

template <int N>
void save_dataset(const Dataset<N>& ds, const std::string& path) {
    if (std::size_t(ds.data.clean.size()) != ds.sensor_points.size() ||
        ds.data.noisy.size() != ds.data.clean.size())
        throw validation_error("save_dataset: size mismatch between values and sensors");
    std::ofstream out(path);
    if (!out) throw parse_error("save_dataset: cannot open " + path);
    nlohmann::json header;
    header["format"] = "blt-dataset";
    header["version"] = 1;
    header["dim"] = N;
    header["radius"] = ds.domain_radius;
    header["M"] = ds.sensor_points.size();
    header["delta"] = ds.data.delta;
    header["seed"] = ds.data.seed;
    const Eigen::VectorXd diff = ds.data.noisy - ds.data.clean;
    header["noise_l2_abs"] = diff.norm();
    header["noise_l2_rel"] = ds.data.clean.norm() > 0.0 ? diff.norm() / ds.data.clean.norm() : 0.0;
    double max_rel = 0.0;
    for (Eigen::Index i = 0; i < diff.size(); ++i)
        if (ds.data.clean[i] != 0.0) max_rel = std::max(max_rel, std::abs(diff[i] / ds.data.clean[i]));
    header["noise_max_rel"] = max_rel;
    out << header.dump() << "\n";
    char buf[160];
    for (std::size_t i = 0; i < ds.sensor_points.size(); ++i) {
        for (int k = 0; k < N; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g ", ds.sensor_points[i][k]);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%a %a\n", ds.data.clean[i], ds.data.noisy[i]);
        out << buf;
    }
    if (!out) throw parse_error("save_dataset: write failure on " + path);
}

template <int N>
Dataset<N> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("load_dataset: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ":1: missing header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path + ":1: bad JSON header: " + e.what());
    }
    if (header.value("format", "") != std::string("blt-dataset"))
        throw parse_error(path + ":1: not a blt-dataset file");
    if (header.value("version", -1) != 1)
        throw parse_error(path + ":1: unsupported dataset version " +
                          std::to_string(header.value("version", -1)));
    if (header.value("dim", -1) != N)
        throw parse_error(path + ":1: dataset dimension mismatch");
    const std::size_t M = header.at("M").get<std::size_t>();
    Dataset<N> ds;
    ds.domain_radius = header.value("radius", 0.0);
    ds.data.delta = header.at("delta").get<double>();
    ds.data.seed = header.at("seed").get<std::uint64_t>();
    ds.data.clean.resize(M);
    ds.data.noisy.resize(M);
    ds.sensor_points.resize(M);
    for (std::size_t i = 0; i < M; ++i) {
        if (!std::getline(in, line))
            throw parse_error(path + ":" + std::to_string(i + 2) + ": truncated dataset (expected " +
                              std::to_string(M) + " rows)");
        const char* s = line.c_str();
        char* end = nullptr;
        for (int k = 0; k < N; ++k) {
            ds.sensor_points[i][k] = std::strtod(s, &end);
            if (end == s) throw parse_error(path + ":" + std::to_string(i + 2) + ": malformed coordinates");
            s = end;
        }
        ds.data.clean[i] = std::strtod(s, &end);
        if (end == s) throw parse_error(path + ":" + std::to_string(i + 2) + ": malformed clean value");
        s = end;
        ds.data.noisy[i] = std::strtod(s, &end);
        if (end == s) throw parse_error(path + ":" + std::to_string(i + 2) + ": malformed noisy value");
    }
    return ds;
}

// CSV mirror of a measurement: sensor_index, x, y[, z], g_value.
template <int N>
void write_measurement_csv(const std::vector<Vec<N>>& points, const Eigen::VectorXd& values,
                           const std::string& path) {
    if (std::size_t(values.size()) != points.size())
        throw validation_error("write_measurement_csv: size mismatch");
    std::ofstream out(path);
    if (!out) throw parse_error("write_measurement_csv: cannot open " + path);
    out << (N == 2 ? "sensor_index,x,y,g_value\n" : "sensor_index,x,y,z,g_value\n");
    char buf[200];
    for (std::size_t i = 0; i < points.size(); ++i) {
        if constexpr (N == 2)
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, points[i][0], points[i][1],
                          values[i]);
        else
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, points[i][0], points[i][1],
                          points[i][2], values[i]);
        out << buf;
    }
}

}  // namespace blt
