#ifndef QVI_IO_HPP
#define QVI_IO_HPP

// Artifact writers. Every file starts with a comment header carrying the
// tool version and the config hash; numbers use the shortest decimal that
// round-trips, so identical runs produce byte-identical artifacts.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qvi/grid.hpp"
#include "qvi/simulate.hpp"
#include "qvi/strategy.hpp"

namespace qvi::io {

inline constexpr const char* kToolVersion = "0.1.0";

std::string format_double(double v);
std::string fnv1a_hex(std::string_view bytes);
std::string artifact_header(const std::string& config_hash);

void write_text_file(const std::filesystem::path& path, const std::string& content);
void write_kv_file(const std::filesystem::path& path, const std::string& header,
                   const std::vector<std::pair<std::string, std::string>>& kv);

/// Header row of x-coordinates, one row per time node (first column t).
void write_field_csv(const std::filesystem::path& path, const std::string& header,
                     const grid::Grid& g, const grid::ValueField& field);

/// Long format: t, x, v, Mv, Nv, argmax-b, argmin-e.
void write_obstacles_csv(const std::filesystem::path& path, const std::string& header,
                         const model::ProblemSpec& spec, const grid::Grid& g,
                         const grid::ValueField& field, int threads = 1);

/// Per time slice, rows "x-index,intervene(0/1),b-index".
void write_policy_csv(const std::filesystem::path& path, const std::string& header,
                      const strategy::ImpulsePolicy& policy, const grid::Grid& g);

/// Header "n=<level>", then per slice rows "x-index,e-index,trigger(0/1)".
void write_density_csv(const std::filesystem::path& path, const std::string& header,
                       const strategy::RandomizationDensity& density, const grid::Grid& g);

void write_regions_csv(const std::filesystem::path& path, const std::string& header,
                       const strategy::RegionReport& report);

void write_deltas_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<double>& deltas);

/// Flag-gated per-path dump: t, X, event type, cost.
void write_paths_csv(const std::filesystem::path& path, const std::string& header,
                     const model::ProblemSpec& spec,
                     const std::vector<simulate::PathRecord>& records);

}  // namespace qvi::io

#endif
