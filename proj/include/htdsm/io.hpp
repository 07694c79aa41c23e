#pragma once

#include "htdsm/common.hpp"
#include "htdsm/experiments.hpp"
#include "htdsm/metrics.hpp"
#include "htdsm/sampler.hpp"
#include "htdsm/schedule.hpp"
#include "htdsm/scorenet.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace htdsm {

using Json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

/// RFC-4180 CSV writer; fields containing separators or quotes are quoted.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& field(const std::string& value);
    CsvWriter& field(double value);
    CsvWriter& field(std::size_t value);
    void end_row();
    void row(const std::vector<std::string>& values);

private:
    std::ostream& out_;
    bool fresh_ = true;
};

/// Reads a numeric CSV point set. A non-numeric first line is treated as a
/// header; when it names x0, x1, ... only those columns are read.
PointSet read_points_csv(const std::filesystem::path& path);
void write_points_csv(const std::filesystem::path& path, const PointSet& points);

/// particle_id, level, step, x0..x{d-1}; requires recorded paths.
void write_paths_csv(const std::filesystem::path& path, const std::vector<ParticlePath>& paths);
/// particle_id, status, x0..x{d-1}.
void write_endpoints_csv(const std::filesystem::path& path,
                         const std::vector<ParticlePath>& paths);

void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

Json to_json(const NoiseSchedule& schedule);
Json to_json(const MixtureSpec& mixture);
Json to_json(const MetricReport& report);
Json to_json(const TrainConfig& cfg);
Json to_json(const SamplerConfig& cfg);

/// Each reader starts from `base` and overrides the keys present in `j`.
/// Unknown keys are rejected with DomainError.
MixtureSpec mixture_from_json(const Json& j, MixtureSpec base);
NoiseSchedule schedule_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j, TrainConfig base);
SamplerConfig sampler_config_from_json(const Json& j, SamplerConfig base);
/// `seeds` may be an explicit list or a count n meaning 0..n-1.
ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base);
Json to_json(const ExperimentConfig& cfg);

/// Checkpoint: layer widths plus, per layer, a row-major weight matrix and a bias.
struct Checkpoint {
    ScoreNetwork net;
    std::optional<TrainConfig> train;
};

Json checkpoint_to_json(const ScoreNetwork& net, const TrainConfig* train = nullptr);
Checkpoint checkpoint_from_json(const Json& j);

}  // namespace htdsm
