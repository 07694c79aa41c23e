#include "htdsm/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace htdsm {

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return {buf, res.ptr};
}

CsvWriter& CsvWriter::field(const std::string& value) {
    if (!fresh_) {
        out_ << ',';
    }
    fresh_ = false;
    if (value.find_first_of(",\"\r\n") == std::string::npos) {
        out_ << value;
        return *this;
    }
    out_ << '"';
    for (char c : value) {
        if (c == '"') {
            out_ << '"';
        }
        out_ << c;
    }
    out_ << '"';
    return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(format_double(value)); }

CsvWriter& CsvWriter::field(std::size_t value) { return field(std::to_string(value)); }

void CsvWriter::end_row() {
    out_ << "\r\n";
    fresh_ = true;
}

void CsvWriter::row(const std::vector<std::string>& values) {
    for (const auto& v : values) {
        field(v);
    }
    end_row();
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

bool parse_number(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') {
        ++first;
    }
    if (first < last && *first == '+') {
        ++first;
    }
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc{} && res.ptr == last;
}

void header(CsvWriter& w, std::initializer_list<const char*> lead, std::size_t dim) {
    for (const char* name : lead) {
        w.field(std::string(name));
    }
    for (std::size_t j = 0; j < dim; ++j) {
        w.field("x" + std::to_string(j));
    }
    w.end_row();
}

std::size_t path_dim(const std::vector<ParticlePath>& paths) {
    return paths.empty() ? 0 : paths.front().final_position.size();
}

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const char* what) {
    if (!j.is_object()) {
        throw DomainError(std::string(what) + ": expected a JSON object");
    }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            throw DomainError(std::string(what) + ": unknown key '" + item.key() + "'");
        }
    }
}

template <class T>
void read_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

}  // namespace

PointSet read_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open for reading: " + path.string());
    }
    std::string line;
    std::vector<std::size_t> columns;
    PointSet points;
    bool first = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (first) {
            first = false;
            double probe = 0.0;
            if (!parse_number(cells.front(), probe)) {
                for (std::size_t c = 0; c < cells.size(); ++c) {
                    if (cells[c].size() > 1 && cells[c][0] == 'x' &&
                        cells[c].find_first_not_of("0123456789", 1) == std::string::npos) {
                        columns.push_back(c);
                    }
                }
                if (columns.empty()) {
                    for (std::size_t c = 0; c < cells.size(); ++c) {
                        columns.push_back(c);
                    }
                }
                continue;
            }
            for (std::size_t c = 0; c < cells.size(); ++c) {
                columns.push_back(c);
            }
        }
        std::vector<double> row;
        row.reserve(columns.size());
        for (std::size_t c : columns) {
            double v = 0.0;
            if (c >= cells.size() || !parse_number(cells[c], v)) {
                throw DomainError(path.string() + ":" + std::to_string(line_no) +
                                  ": non-numeric or missing value");
            }
            row.push_back(v);
        }
        points.push_back(row);
    }
    return points;
}

void write_points_csv(const std::filesystem::path& path, const PointSet& points) {
    auto out = open_out(path);
    CsvWriter w(out);
    header(w, {}, points.dim());
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (double v : points.row(i)) {
            w.field(v);
        }
        w.end_row();
    }
}

void write_paths_csv(const std::filesystem::path& path, const std::vector<ParticlePath>& paths) {
    const std::size_t dim = path_dim(paths);
    auto out = open_out(path);
    CsvWriter w(out);
    header(w, {"particle_id", "level", "step"}, dim);
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& path_p = paths[p];
        std::size_t step = 0;
        std::uint32_t current = 0;
        for (std::size_t r = 0; r < path_p.position_levels.size(); ++r) {
            if (path_p.position_levels[r] != current) {
                current = path_p.position_levels[r];
                step = 0;
            }
            w.field(p).field(std::size_t{current}).field(step++);
            for (std::size_t j = 0; j < dim; ++j) {
                w.field(path_p.positions[r * dim + j]);
            }
            w.end_row();
        }
    }
}

void write_endpoints_csv(const std::filesystem::path& path,
                         const std::vector<ParticlePath>& paths) {
    const std::size_t dim = path_dim(paths);
    auto out = open_out(path);
    CsvWriter w(out);
    header(w, {"particle_id", "status"}, dim);
    for (std::size_t p = 0; p < paths.size(); ++p) {
        w.field(p).field(std::string(to_string(paths[p].status)));
        for (double v : paths[p].final_position) {
            w.field(v);
        }
        w.end_row();
    }
}

void write_json(const std::filesystem::path& path, const Json& value) {
    auto out = open_out(path);
    out << value.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open for reading: " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw DomainError(path.string() + ": " + e.what());
    }
}

Json to_json(const NoiseSchedule& schedule) {
    static const char* kinds[] = {"quantile_matched", "geometric", "explicit"};
    Json j;
    j["kind"] = kinds[static_cast<int>(schedule.kind)];
    j["sigmas"] = schedule.sigmas;
    j["beta"] = schedule.beta;
    j["n"] = schedule.n;
    if (schedule.delta) {
        j["delta"] = *schedule.delta;
    }
    j["top_clamped"] = schedule.top_clamped;
    j["empirical"] = schedule.empirical;
    return j;
}

Json to_json(const MixtureSpec& mixture) {
    return Json{{"means", mixture.means}, {"stds", mixture.stds}, {"weights", mixture.weights}};
}

Json to_json(const MetricReport& report) {
    Json j;
    j["feature_map"] = report.feature_map;
    j["k"] = report.k;
    const auto put = [&](const char* key, const std::optional<double>& v) {
        j[key] = v ? Json(*v) : Json(nullptr);
    };
    put("precision", report.precision);
    put("recall", report.recall);
    put("density", report.density);
    put("coverage", report.coverage);
    put("kid", report.kid);
    put("fid", report.fid);
    return j;
}

Json to_json(const TrainConfig& cfg) {
    Json j;
    j["schedule"] = cfg.schedule.sigmas;
    j["noise_beta"] = cfg.noise.beta;
    j["alpha_unit"] = cfg.noise.resolved_alpha_unit();
    j["weight_exponent"] = cfg.noise.weight_exponent;
    j["hidden"] = cfg.hidden;
    j["batch_size"] = cfg.batch_size;
    j["steps"] = cfg.steps;
    j["learning_rate"] = cfg.learning_rate;
    j["optimizer"] = cfg.optimizer == Optimizer::sgd ? "sgd" : "adam";
    j["seed"] = cfg.seed;
    return j;
}

Json to_json(const SamplerConfig& cfg) {
    Json j;
    j["schedule"] = cfg.schedule.sigmas;
    j["steps_per_level"] = cfg.steps_per_level;
    j["epsilon"] = cfg.epsilon;
    j["diffusion_beta"] = cfg.diffusion_beta;
    j["zero_temperature"] = cfg.zero_temperature;
    j["init_half_width"] = cfg.init_half_width;
    j["divergence_radius"] = cfg.divergence_radius;
    j["record_paths"] = cfg.record_paths;
    j["dim"] = cfg.dim;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    return j;
}

MixtureSpec mixture_from_json(const Json& j, MixtureSpec base) {
    reject_unknown(j, {"ratio", "offset", "std", "means", "stds", "weights"}, "mixture");
    if (j.contains("ratio") || j.contains("offset") || j.contains("std")) {
        base = MixtureSpec::two_mode(j.value("ratio", 1.0), j.value("offset", 2.5),
                                     j.value("std", 0.5));
    }
    read_if(j, "means", base.means);
    read_if(j, "stds", base.stds);
    read_if(j, "weights", base.weights);
    base.validate();
    return base;
}

NoiseSchedule schedule_from_json(const Json& j) {
    if (j.is_array()) {
        return NoiseSchedule::from_levels(j.get<std::vector<double>>());
    }
    reject_unknown(j, {"kind", "sigmas", "beta", "n", "dim", "delta", "sigma_min", "sigma_max",
                       "count", "top_clamped", "empirical"},
                   "schedule");
    const std::string kind = j.value("kind", std::string("explicit"));
    if (kind == "explicit") {
        return NoiseSchedule::from_levels(j.at("sigmas").get<std::vector<double>>());
    }
    if (kind == "geometric") {
        return geometric_schedule(j.at("sigma_max").get<double>(), j.at("sigma_min").get<double>(),
                                  j.at("count").get<std::size_t>());
    }
    if (kind == "quantile_matched") {
        const auto n = j.contains("n") ? j.at("n").get<std::size_t>() : j.value("dim", std::size_t{2});
        return quantile_matched_schedule(j.at("beta").get<double>(), n, j.at("delta").get<double>(),
                                         j.at("sigma_min").get<double>(),
                                         j.at("sigma_max").get<double>());
    }
    throw DomainError("schedule: unknown kind '" + kind + "'");
}

TrainConfig train_config_from_json(const Json& j, TrainConfig base) {
    reject_unknown(j, {"schedule", "noise_beta", "alpha_unit", "weight_exponent", "hidden",
                       "batch_size", "steps", "learning_rate", "optimizer", "seed"},
                   "train config");
    if (j.contains("schedule")) {
        base.schedule = schedule_from_json(j.at("schedule"));
    }
    read_if(j, "noise_beta", base.noise.beta);
    if (j.contains("alpha_unit")) {
        base.noise.alpha_unit = j.at("alpha_unit").get<double>();
    }
    read_if(j, "weight_exponent", base.noise.weight_exponent);
    read_if(j, "hidden", base.hidden);
    read_if(j, "batch_size", base.batch_size);
    read_if(j, "steps", base.steps);
    read_if(j, "learning_rate", base.learning_rate);
    read_if(j, "seed", base.seed);
    if (j.contains("optimizer")) {
        const auto name = j.at("optimizer").get<std::string>();
        if (name == "sgd") {
            base.optimizer = Optimizer::sgd;
        } else if (name == "adam") {
            base.optimizer = Optimizer::adam;
        } else {
            throw DomainError("train config: optimizer must be 'sgd' or 'adam'");
        }
    }
    base.validate();
    return base;
}

SamplerConfig sampler_config_from_json(const Json& j, SamplerConfig base) {
    reject_unknown(j, {"schedule", "steps_per_level", "epsilon", "diffusion_beta",
                       "zero_temperature", "init_half_width", "divergence_radius",
                       "record_paths", "dim", "seed", "workers"},
                   "sampler config");
    if (j.contains("schedule")) {
        base.schedule = schedule_from_json(j.at("schedule"));
    }
    if (j.contains("steps_per_level")) {
        const auto& t = j.at("steps_per_level");
        base.steps_per_level = t.is_array() ? t.get<std::vector<std::size_t>>()
                                            : std::vector<std::size_t>{t.get<std::size_t>()};
    }
    read_if(j, "epsilon", base.epsilon);
    read_if(j, "diffusion_beta", base.diffusion_beta);
    read_if(j, "zero_temperature", base.zero_temperature);
    read_if(j, "init_half_width", base.init_half_width);
    read_if(j, "divergence_radius", base.divergence_radius);
    read_if(j, "record_paths", base.record_paths);
    read_if(j, "dim", base.dim);
    read_if(j, "seed", base.seed);
    read_if(j, "workers", base.workers);
    base.validate();
    return base;
}

ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base) {
    reject_unknown(j, {"mixture", "majority_samples", "train", "sample", "particles", "seeds",
                       "master_seed", "htdsm_beta", "sweep_betas", "compute_metrics", "metric_k",
                       "bootstrap_resamples", "ci_level", "workers"},
                   "experiment config");
    if (j.contains("mixture")) {
        base.mixture = mixture_from_json(j.at("mixture"), base.mixture);
    }
    if (j.contains("train")) {
        base.train = train_config_from_json(j.at("train"), base.train);
    }
    if (j.contains("sample")) {
        base.sample = sampler_config_from_json(j.at("sample"), base.sample);
    }
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        if (s.is_array()) {
            base.seeds = s.get<std::vector<std::uint64_t>>();
        } else {
            base.seeds.resize(s.get<std::size_t>());
            std::iota(base.seeds.begin(), base.seeds.end(), std::uint64_t{0});
        }
    }
    read_if(j, "majority_samples", base.majority_samples);
    read_if(j, "particles", base.particles);
    read_if(j, "master_seed", base.master_seed);
    read_if(j, "htdsm_beta", base.htdsm_beta);
    read_if(j, "sweep_betas", base.sweep_betas);
    read_if(j, "compute_metrics", base.compute_metrics);
    read_if(j, "metric_k", base.metric_k);
    read_if(j, "bootstrap_resamples", base.bootstrap_resamples);
    read_if(j, "ci_level", base.ci_level);
    read_if(j, "workers", base.workers);
    base.validate();
    return base;
}

Json to_json(const ExperimentConfig& cfg) {
    Json j;
    j["mixture"] = to_json(cfg.mixture);
    j["majority_samples"] = cfg.majority_samples;
    j["train"] = to_json(cfg.train);
    j["sample"] = to_json(cfg.sample);
    j["particles"] = cfg.particles;
    j["seeds"] = cfg.seeds;
    j["master_seed"] = cfg.master_seed;
    j["htdsm_beta"] = cfg.htdsm_beta;
    j["sweep_betas"] = cfg.sweep_betas;
    j["compute_metrics"] = cfg.compute_metrics;
    j["metric_k"] = cfg.metric_k;
    j["bootstrap_resamples"] = cfg.bootstrap_resamples;
    j["ci_level"] = cfg.ci_level;
    j["workers"] = cfg.workers;
    return j;
}

Json checkpoint_to_json(const ScoreNetwork& net, const TrainConfig* train) {
    Json j;
    j["widths"] = net.widths();
    Json layers = Json::array();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const std::size_t in = net.widths()[l];
        const std::size_t out = net.widths()[l + 1];
        const auto w = net.weights(l);
        Json rows = Json::array();
        for (std::size_t r = 0; r < out; ++r) {
            rows.push_back(std::vector<double>(w.begin() + static_cast<std::ptrdiff_t>(r * in),
                                               w.begin() + static_cast<std::ptrdiff_t>((r + 1) * in)));
        }
        const auto b = net.bias(l);
        layers.push_back(Json{{"weights", rows}, {"bias", std::vector<double>(b.begin(), b.end())}});
    }
    j["layers"] = layers;
    if (train) {
        j["train"] = to_json(*train);
    }
    return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
    reject_unknown(j, {"widths", "layers", "train"}, "checkpoint");
    const auto widths = j.at("widths").get<std::vector<std::size_t>>();
    const auto& layers = j.at("layers");
    if (widths.size() < 2 || layers.size() != widths.size() - 1) {
        throw DomainError("checkpoint: layer count does not match widths");
    }
    std::vector<double> params;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto rows = layers[l].at("weights").get<std::vector<std::vector<double>>>();
        const auto bias = layers[l].at("bias").get<std::vector<double>>();
        if (rows.size() != widths[l + 1] || bias.size() != widths[l + 1]) {
            throw DomainError("checkpoint: layer " + std::to_string(l) + " has wrong output width");
        }
        for (const auto& r : rows) {
            if (r.size() != widths[l]) {
                throw DomainError("checkpoint: layer " + std::to_string(l) + " has wrong input width");
            }
            params.insert(params.end(), r.begin(), r.end());
        }
        params.insert(params.end(), bias.begin(), bias.end());
    }
    Checkpoint ck{ScoreNetwork(widths, std::move(params)), std::nullopt};
    if (j.contains("train")) {
        ck.train = train_config_from_json(j.at("train"), TrainConfig{});
    }
    return ck;
}

}  // namespace htdsm
