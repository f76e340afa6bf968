#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ssr/common.hpp"
#include "ssr/data.hpp"

namespace ssr {

// The five reconstruction metrics for one real/estimated cube pair.
// Accumulation is always 64-bit regardless of the stored precision.
struct MetricReport {
    std::string id;
    double rmse1 = 0.0;   // mean absolute error
    double rmse2 = 0.0;   // root mean squared error
    double rrmse1 = 0.0;  // mean |error| / truth, per element
    double rrmse2 = 0.0;  // rmse2 / mean(truth)
    double sam_degrees = 0.0;
};

namespace detail {

inline void metric_shape_check(const HyperCube& real, const HyperCube& est) {
    check(real.same_shape(est), "metrics: cube shapes differ");
}

}  // namespace detail

inline double metric_rmse1(const HyperCube& real, const HyperCube& est) {
    detail::metric_shape_check(real, est);
    double acc = 0.0;
    for (int64_t i = 0; i < real.size(); ++i)
        acc += std::abs(static_cast<double>(real.data[static_cast<size_t>(i)]) -
                        static_cast<double>(est.data[static_cast<size_t>(i)]));
    return acc / static_cast<double>(real.size());
}

inline double metric_rmse2(const HyperCube& real, const HyperCube& est) {
    detail::metric_shape_check(real, est);
    double acc = 0.0;
    for (int64_t i = 0; i < real.size(); ++i) {
        const double d = static_cast<double>(real.data[static_cast<size_t>(i)]) -
                         static_cast<double>(est.data[static_cast<size_t>(i)]);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(real.size()));
}

inline double metric_rrmse1(const HyperCube& real, const HyperCube& est) {
    detail::metric_shape_check(real, est);
    double acc = 0.0;
    for (int64_t i = 0; i < real.size(); ++i) {
        const double t = static_cast<double>(real.data[static_cast<size_t>(i)]);
        if (t <= 0.0)
            throw std::domain_error("rrmse1: ground-truth elements must be positive");
        acc += std::abs(t - static_cast<double>(est.data[static_cast<size_t>(i)])) / t;
    }
    return acc / static_cast<double>(real.size());
}

inline double metric_rrmse2(const HyperCube& real, const HyperCube& est) {
    detail::metric_shape_check(real, est);
    double mean = 0.0;
    for (float v : real.data) mean += static_cast<double>(v);
    mean /= static_cast<double>(real.size());
    if (mean == 0.0) throw std::domain_error("rrmse2: ground-truth mean is zero");
    double acc = 0.0;
    for (int64_t i = 0; i < real.size(); ++i) {
        const double d = static_cast<double>(real.data[static_cast<size_t>(i)]) -
                         static_cast<double>(est.data[static_cast<size_t>(i)]);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(real.size()) / (mean * mean));
}

// Mean per-pixel angle between true and estimated spectra, in degrees.
// Evaluated as 2*atan2(|u^ - v^|, |u^ + v^|) on the normalized spectra,
// which equals acos of the clamped cosine but stays fully accurate near
// 0 and 180 degrees (identical spectra give exactly zero).
inline double metric_sam_degrees(const HyperCube& real, const HyperCube& est) {
    detail::metric_shape_check(real, est);
    const int64_t pixels = real.plane();
    std::vector<double> ur(static_cast<size_t>(real.bands));
    std::vector<double> ue(static_cast<size_t>(real.bands));
    double acc = 0.0;
    for (int64_t px = 0; px < pixels; ++px) {
        double nr = 0.0, ne = 0.0;
        for (int b = 0; b < real.bands; ++b) {
            const size_t i = static_cast<size_t>(static_cast<int64_t>(b) * pixels + px);
            ur[static_cast<size_t>(b)] = static_cast<double>(real.data[i]);
            ue[static_cast<size_t>(b)] = static_cast<double>(est.data[i]);
            nr += ur[static_cast<size_t>(b)] * ur[static_cast<size_t>(b)];
            ne += ue[static_cast<size_t>(b)] * ue[static_cast<size_t>(b)];
        }
        if (nr == 0.0 || ne == 0.0)
            throw std::domain_error("sam: zero-norm pixel spectrum");
        const double inr = 1.0 / std::sqrt(nr), ine = 1.0 / std::sqrt(ne);
        double dminus = 0.0, dplus = 0.0;
        for (int b = 0; b < real.bands; ++b) {
            // volatile stops fp-contraction from fusing a product into the
            // subtraction; identical spectra must difference to exactly zero
            volatile double av = ur[static_cast<size_t>(b)] * inr;
            volatile double cv = ue[static_cast<size_t>(b)] * ine;
            const double a = av, c = cv;
            dminus += (a - c) * (a - c);
            dplus += (a + c) * (a + c);
        }
        acc += 2.0 * std::atan2(std::sqrt(dminus), std::sqrt(dplus));
    }
    return acc / static_cast<double>(pixels) * (180.0 / 3.14159265358979323846);
}

inline MetricReport evaluate_all(const HyperCube& real, const HyperCube& est,
                                 std::string id = {}) {
    MetricReport r;
    r.id = std::move(id);
    r.rmse1 = metric_rmse1(real, est);
    r.rmse2 = metric_rmse2(real, est);
    r.rrmse1 = metric_rrmse1(real, est);
    r.rrmse2 = metric_rrmse2(real, est);
    r.sam_degrees = metric_sam_degrees(real, est);
    return r;
}

// Per-pixel absolute error summed over bands; the numeric error-map export.
inline std::vector<float> error_map(const HyperCube& real, const HyperCube& est) {
    detail::metric_shape_check(real, est);
    const int64_t pixels = real.plane();
    std::vector<float> map(static_cast<size_t>(pixels), 0.0f);
    for (int b = 0; b < real.bands; ++b) {
        const size_t off = static_cast<size_t>(static_cast<int64_t>(b) * pixels);
        for (int64_t px = 0; px < pixels; ++px)
            map[static_cast<size_t>(px)] +=
                std::abs(real.data[off + static_cast<size_t>(px)] -
                         est.data[off + static_cast<size_t>(px)]);
    }
    return map;
}

// CSV rows in the method x image x metric layout, one final average row.
inline void write_metric_csv(const std::string& method,
                             const std::vector<MetricReport>& rows, const std::string& path) {
    check(!rows.empty(), "write_metric_csv: no rows");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("write_metric_csv: cannot open " + path);
    f << "method,image,rmse1,rmse2,rrmse1,rrmse2,sam\n";
    char buf[512];
    MetricReport avg;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", method.c_str(),
                      r.id.c_str(), r.rmse1, r.rmse2, r.rrmse1, r.rrmse2, r.sam_degrees);
        f << buf;
        avg.rmse1 += r.rmse1;
        avg.rmse2 += r.rmse2;
        avg.rrmse1 += r.rrmse1;
        avg.rrmse2 += r.rrmse2;
        avg.sam_degrees += r.sam_degrees;
    }
    const double n = static_cast<double>(rows.size());
    std::snprintf(buf, sizeof(buf), "%s,average,%.9g,%.9g,%.9g,%.9g,%.9g\n", method.c_str(),
                  avg.rmse1 / n, avg.rmse2 / n, avg.rrmse1 / n, avg.rrmse2 / n,
                  avg.sam_degrees / n);
    f << buf;
}

inline MetricReport average_report(const std::vector<MetricReport>& rows) {
    check(!rows.empty(), "average_report: no rows");
    MetricReport avg;
    avg.id = "average";
    for (const auto& r : rows) {
        avg.rmse1 += r.rmse1;
        avg.rmse2 += r.rmse2;
        avg.rrmse1 += r.rrmse1;
        avg.rrmse2 += r.rrmse2;
        avg.sam_degrees += r.sam_degrees;
    }
    const double n = static_cast<double>(rows.size());
    avg.rmse1 /= n;
    avg.rmse2 /= n;
    avg.rrmse1 /= n;
    avg.rrmse2 /= n;
    avg.sam_degrees /= n;
    return avg;
}

}  // namespace ssr
