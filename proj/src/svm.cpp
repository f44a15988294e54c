#include "chaosld/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chaosld/rng.hpp"

namespace chaosld {

namespace {

constexpr double kLrTau = 1e4; // eta_t = lr0 / (1 + t / kLrTau)

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                             static_cast<long>(v.size()));
}

} // namespace

const char* feature_set_name(FeatureSet set) {
    switch (set) {
    case FeatureSet::SOnly: return "S_only";
    case FeatureSet::LogSOnly: return "logS_only";
    case FeatureSet::SAndEnergy: return "S_and_energy";
    case FeatureSet::LogSAndEnergy: return "logS_and_energy";
    }
    throw ConfigError("unknown feature set");
}

FeatureSet feature_set_from_name(const std::string& name) {
    if (name == "S_only") return FeatureSet::SOnly;
    if (name == "logS_only") return FeatureSet::LogSOnly;
    if (name == "S_and_energy") return FeatureSet::SAndEnergy;
    if (name == "logS_and_energy") return FeatureSet::LogSAndEnergy;
    throw ConfigError("unknown feature set '" + name +
                      "' (expected S_only, logS_only, S_and_energy or "
                      "logS_and_energy)");
}

int feature_count(FeatureSet set) {
    return (set == FeatureSet::SAndEnergy || set == FeatureSet::LogSAndEnergy)
               ? 2
               : 1;
}

FeatureMatrix extract_features(const std::vector<IndicatorRecord>& records,
                               FeatureSet set) {
    const bool use_log =
        set == FeatureSet::LogSOnly || set == FeatureSet::LogSAndEnergy;
    const bool use_energy =
        set == FeatureSet::SAndEnergy || set == FeatureSet::LogSAndEnergy;
    const int dim = feature_count(set);

    std::vector<std::size_t> rows;
    rows.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (use_log && !std::isfinite(records[i].log10_s))
            continue; // S = 0 sentinel has no logarithm
        if (use_energy && !std::isfinite(records[i].energy))
            throw DataError("energy feature requested but a record carries "
                            "no energy (map data)");
        rows.push_back(i);
    }

    FeatureMatrix out;
    out.x.resize(static_cast<long>(rows.size()), dim);
    out.y.resize(static_cast<long>(rows.size()));
    out.source_rows = std::move(rows);
    for (std::size_t k = 0; k < out.source_rows.size(); ++k) {
        const auto& r = records[out.source_rows[k]];
        const long row = static_cast<long>(k);
        out.x(row, 0) = use_log ? r.log10_s : r.indicators.s;
        if (use_energy) out.x(row, 1) = r.energy;
        out.y[row] = r.label == Label::Chaotic ? 1.0 : -1.0;
    }
    return out;
}

double hinge_loss(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& y) {
    if (x.rows() == 0) return 0.0;
    Eigen::ArrayXd margin = 1.0 - y.array() * (x * w).array() - y.array() * b;
    return margin.max(0.0).mean();
}

void hinge_gradient(const Eigen::VectorXd& w, double b,
                    const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    Eigen::VectorXd& grad_w, double& grad_b) {
    grad_w = Eigen::VectorXd::Zero(w.size());
    grad_b = 0.0;
    if (x.rows() == 0) return;
    for (long i = 0; i < x.rows(); ++i) {
        double f = x.row(i).dot(w) + b;
        if (1.0 - y[i] * f > 0.0) {
            grad_w -= y[i] * x.row(i).transpose();
            grad_b -= y[i];
        }
    }
    grad_w /= static_cast<double>(x.rows());
    grad_b /= static_cast<double>(x.rows());
}

void TrainOptions::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(lr0 > 0.0) || !std::isfinite(lr0))
        throw ConfigError("lr0 must be positive and finite");
    if (batch == 0) throw ConfigError("batch size must be positive");
}

FitResult fit(const FeatureMatrix& data, FeatureSet set,
              const TrainOptions& opts) {
    opts.validate();
    const long n = data.x.rows();
    const int dim = feature_count(set);
    if (data.x.cols() != dim)
        throw ConfigError("feature matrix width does not match the recipe");
    if (data.y.size() != n)
        throw ConfigError("feature matrix and label vector disagree");
    bool has_pos = false, has_neg = false;
    for (long i = 0; i < n; ++i) {
        if (data.y[i] > 0) has_pos = true;
        if (data.y[i] < 0) has_neg = true;
    }
    if (!has_pos || !has_neg)
        throw DataError("training data contains a single class: nothing to "
                        "separate");

    LinearSvmModel model;
    model.features = set;
    model.training = opts;
    model.norm.mean = data.x.colwise().mean();
    model.norm.scale.resize(dim);
    for (int j = 0; j < dim; ++j) {
        double var =
            (data.x.col(j).array() - model.norm.mean[j]).square().mean();
        double sd = std::sqrt(var);
        model.norm.scale[j] = sd > 0.0 ? sd : 1.0;
    }

    Eigen::MatrixXd xn = data.x;
    for (int j = 0; j < dim; ++j)
        xn.col(j) =
            (xn.col(j).array() - model.norm.mean[j]) / model.norm.scale[j];

    model.w = Eigen::VectorXd::Zero(dim);
    model.b = 0.0;

    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    SplitMix64 g(opts.seed);

    FitResult res;
    res.epoch_loss.reserve(opts.epochs);
    Eigen::VectorXd grad_w(dim);
    std::size_t t = 0; // global batch-update counter
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = perm.size() - 1; i > 0; --i) {
            std::size_t j = g.next_below(i + 1);
            std::swap(perm[i], perm[j]);
        }
        double loss_acc = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < perm.size();
             start += opts.batch) {
            const std::size_t count =
                std::min(opts.batch, perm.size() - start);
            grad_w.setZero();
            double grad_b = 0.0, loss = 0.0;
            for (std::size_t k = 0; k < count; ++k) {
                const long row = static_cast<long>(perm[start + k]);
                const double f = xn.row(row).dot(model.w) + model.b;
                const double gap = 1.0 - data.y[row] * f;
                if (gap > 0.0) {
                    loss += gap;
                    grad_w -= data.y[row] * xn.row(row).transpose();
                    grad_b -= data.y[row];
                }
            }
            const double inv = 1.0 / static_cast<double>(count);
            const double eta =
                opts.lr0 / (1.0 + static_cast<double>(t) / kLrTau);
            model.w -= eta * inv * grad_w;
            model.b -= eta * inv * grad_b;
            ++t;
            loss_acc += loss * inv;
            ++batches;
        }
        res.epoch_loss.push_back(loss_acc / static_cast<double>(batches));
    }
    res.model = std::move(model);
    return res;
}

double decision_margin(const LinearSvmModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.w.size())
        throw ConfigError("feature vector length does not match the model");
    Eigen::VectorXd xn =
        (x - model.norm.mean).cwiseQuotient(model.norm.scale);
    return model.w.dot(xn) + model.b;
}

Label predict(const LinearSvmModel& model, const Eigen::VectorXd& x) {
    return decision_margin(model, x) > 0.0 ? Label::Chaotic : Label::Regular;
}

std::string LinearSvmModel::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["kind"] = "linear_svm";
    j["recipe"] = feature_set_name(features);
    j["w"] = to_std(w);
    j["b"] = b;
    j["normalization"] = {{"mean", to_std(norm.mean)},
                          {"scale", to_std(norm.scale)}};
    j["training"] = {{"epochs", training.epochs},
                     {"lr0", training.lr0},
                     {"batch", training.batch},
                     {"seed", training.seed},
                     {"dataset_sha", training.dataset_sha}};
    return j.dump(2);
}

LinearSvmModel LinearSvmModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError("model document is not valid JSON");
    if (!j.contains("version"))
        throw DataError("model document lacks a version field");
    if (!j["version"].is_number_integer() || j["version"].get<int>() != 1)
        throw DataError("unsupported model version");
    if (j.value("kind", "") != "linear_svm")
        throw DataError("model document is not a linear_svm");

    LinearSvmModel m;
    try {
        m.features = feature_set_from_name(j.at("recipe").get<std::string>());
        m.w = to_eigen(j.at("w").get<std::vector<double>>());
        m.b = j.at("b").get<double>();
        const auto& norm = j.at("normalization");
        m.norm.mean = to_eigen(norm.at("mean").get<std::vector<double>>());
        m.norm.scale = to_eigen(norm.at("scale").get<std::vector<double>>());
        if (j.contains("training")) {
            const auto& tr = j.at("training");
            m.training.epochs = tr.value("epochs", std::size_t{0});
            m.training.lr0 = tr.value("lr0", 0.0);
            m.training.batch = tr.value("batch", std::size_t{0});
            m.training.seed = tr.value("seed", std::uint64_t{0});
            m.training.dataset_sha = tr.value("dataset_sha", std::string());
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
    const int dim = feature_count(m.features);
    if (m.w.size() != dim || m.norm.mean.size() != dim ||
        m.norm.scale.size() != dim)
        throw DataError("model document vector lengths do not match the "
                        "recipe");
    for (int i = 0; i < dim; ++i)
        if (!(m.norm.scale[i] > 0.0))
            throw DataError("model normalization scale must be positive");
    return m;
}

void save_model(const LinearSvmModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << model.to_json() << '\n';
    if (!f.flush()) throw IoError("failed writing '" + path + "'");
}

LinearSvmModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << f.rdbuf();
    return LinearSvmModel::from_json(buf.str());
}

EvalReport evaluate(const LinearSvmModel& model,
                    const std::vector<IndicatorRecord>& records) {
    const bool use_log = model.features == FeatureSet::LogSOnly ||
                         model.features == FeatureSet::LogSAndEnergy;
    const bool use_energy = model.features == FeatureSet::SAndEnergy ||
                            model.features == FeatureSet::LogSAndEnergy;

    EvalReport rep;
    std::vector<std::pair<double, CaseAccuracy>> cases; // keyed by value
    Eigen::VectorXd x(model.w.size());
    for (const auto& r : records) {
        if (use_log && !std::isfinite(r.log10_s)) {
            ++rep.skipped;
            continue;
        }
        if (use_energy && !std::isfinite(r.energy))
            throw DataError("energy feature requested but a record carries "
                            "no energy (map data)");
        x[0] = use_log ? r.log10_s : r.indicators.s;
        if (use_energy) x[1] = r.energy;

        const double margin = decision_margin(model, x);
        const Label guess = margin > 0.0 ? Label::Chaotic : Label::Regular;
        const bool correct = guess == r.label;
        if (r.label == Label::Chaotic)
            ++(correct ? rep.tp : rep.fn);
        else
            ++(correct ? rep.tn : rep.fp);

        const double key = r.system.kind == SystemKind::StandardMap
                               ? r.system.K
                               : r.energy;
        auto it = std::find_if(cases.begin(), cases.end(),
                               [&](const auto& c) { return c.first == key; });
        if (it == cases.end()) {
            cases.push_back({key, CaseAccuracy{key, 0, 0}});
            it = std::prev(cases.end());
        }
        ++it->second.total;
        if (correct) ++it->second.correct;
        if (!correct)
            rep.misclassified.push_back({key, r.slice, margin, r.label});
    }

    const std::size_t total = rep.tp + rep.tn + rep.fp + rep.fn;
    if (total == 0) throw DataError("no evaluable records");
    rep.accuracy =
        static_cast<double>(rep.tp + rep.tn) / static_cast<double>(total);
    std::sort(cases.begin(), cases.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& c : cases) rep.per_case.push_back(c.second);
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["accuracy"] = accuracy;
    j["confusion"] = {{"tp", tp}, {"tn", tn}, {"fp", fp}, {"fn", fn}};
    j["skipped"] = skipped;
    j["per_case"] = nlohmann::json::array();
    for (const auto& c : per_case)
        j["per_case"].push_back(
            {{"case", c.case_value},
             {"total", c.total},
             {"correct", c.correct},
             {"accuracy", static_cast<double>(c.correct) /
                              static_cast<double>(c.total)}});
    j["misclassified_count"] = misclassified.size();
    return j.dump(2);
}

} // namespace chaosld
