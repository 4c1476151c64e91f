#include "carve/eval/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace carve::eval {

double flip_ratio(const Matrix& counterfactuals, const detect::Detector& det, double tau) {
    if (counterfactuals.rows == 0) throw ValidationError("flip_ratio: no counterfactuals");
    std::size_t flipped = 0;
    for (std::size_t r = 0; r < counterfactuals.rows; ++r) {
        if (det.score(counterfactuals.row(r)) <= tau) ++flipped;
    }
    return static_cast<double>(flipped) / static_cast<double>(counterfactuals.rows);
}

GroundTruthFlip ground_truth_flip(const Matrix& x, const Matrix& u, const Matrix& thetas, const scm::Scm& scm,
                                  const data::LabelRule& rule) {
    if (x.rows != u.rows || x.rows != thetas.rows) {
        throw ValidationError("ground_truth_flip: row count mismatch between x, u, thetas");
    }
    GroundTruthFlip out;
    out.flipped.assign(x.rows, false);
    std::size_t count = 0;
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto cf = scm::counterfactual_exact(scm, x.row(r), u.row(r), thetas.row(r));
        if (rule.is_normal(rule.value(cf))) {
            out.flipped[r] = true;
            ++count;
        }
    }
    out.ratio = static_cast<double>(count) / static_cast<double>(x.rows);
    return out;
}

NormStats action_norm_on_flipped(const Matrix& thetas, std::span<const double> cost, const std::vector<bool>& mask) {
    if (mask.size() != thetas.rows) throw ValidationError("action_norm_on_flipped: mask size mismatch");
    std::vector<double> norms;
    for (std::size_t r = 0; r < thetas.rows; ++r) {
        if (!mask[r]) continue;
        double acc = 0.0;
        for (std::size_t c = 0; c < thetas.cols; ++c) {
            double v = cost[c] * thetas.at(r, c);
            acc += v * v;
        }
        norms.push_back(std::sqrt(acc));
    }
    NormStats out;
    if (norms.empty()) return out;  // undefined, not zero
    out.defined = true;
    auto agg = aggregate(norms);
    out.mean = agg.mean;
    out.std = agg.std;
    return out;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw ValidationError("spearman: need two equal-length series");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
            double avg = 0.5 * static_cast<double>(i + 1 + j);
            for (std::size_t k = i; k < j; ++k) r[idx[k]] = avg;
            i = j;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) throw ValidationError("spearman: degenerate ranks");
    return num / std::sqrt(da * db);
}

DetectedSet collect_detected(const data::DatasetBundle& bundle, const detect::Detector& det, double tau) {
    DetectedSet out;
    out.x = Matrix(0, bundle.unl_x.cols);
    out.u = Matrix(0, bundle.unl_u.cols);
    for (std::size_t r = 0; r < bundle.unl_x.rows; ++r) {
        if (det.score(bundle.unl_x.row(r)) > tau) {
            out.x.push_row(bundle.unl_x.row(r));
            out.u.push_row(bundle.unl_u.row(r));
            out.rows.push_back(r);
        }
    }
    return out;
}

FlipReport evaluate_policy(const EvalContext& ctx, const DetectedSet& det_set, const recourse::ActionPolicy& policy) {
    FlipReport rep;
    rep.n_detected = det_set.x.rows;
    if (rep.n_detected == 0) return rep;

    const std::size_t d = det_set.x.cols;
    Matrix thetas(0, d);
    for (std::size_t r = 0; r < det_set.x.rows; ++r) thetas.push_row(policy.predict(det_set.x.row(r)));

    // Counterfactuals through the ground-truth equations (the evaluation
    // protocol judges predicted actions in the counterfactual world).
    Matrix cf_scm(0, d);
    for (std::size_t r = 0; r < det_set.x.rows; ++r) {
        cf_scm.push_row(scm::counterfactual_exact(*ctx.scm, det_set.x.row(r), det_set.u.row(r), thetas.row(r)));
    }

    if (ctx.detector_flip_on_scm_cf) {
        rep.flip_detector = flip_ratio(cf_scm, *ctx.detector, ctx.tau);
    } else {
        if (ctx.engine == nullptr) throw ValidationError("evaluate_policy: engine-based flip requested without engine");
        Matrix cf_eng(0, d);
        for (std::size_t r = 0; r < det_set.x.rows; ++r) {
            cf_eng.push_row(
                ctx.engine->soft_counterfactual(det_set.x.row(r), thetas.row(r), policy.actionable(), det_set.u.row(r)));
        }
        rep.flip_detector = flip_ratio(cf_eng, *ctx.detector, ctx.tau);
    }

    GroundTruthFlip gt = ground_truth_flip(det_set.x, det_set.u, thetas, *ctx.scm, ctx.rule);
    rep.flip_ground_truth = gt.ratio;

    std::vector<bool> mask = gt.flipped;
    if (!ctx.norm_on_ground_truth_flips) {
        mask.assign(det_set.x.rows, false);
        for (std::size_t r = 0; r < cf_scm.rows; ++r) {
            if (ctx.detector->score(cf_scm.row(r)) <= ctx.tau) mask[r] = true;
        }
    }
    NormStats norms = action_norm_on_flipped(thetas, ctx.bundle->feature_std, mask);
    if (norms.defined) {
        rep.norm_mean = norms.mean;
        rep.norm_std = norms.std;
    }
    return rep;
}

SweepGrid run_sweep(const std::string& parameter, std::span<const double> values, const EvalContext& ctx,
                    const DetectedSet& det_set, const recourse::RecourseConfig& base_cfg) {
    if (values.empty()) throw ValidationError("run_sweep: no parameter values");
    if (parameter != "lambda" && parameter != "alpha") {
        throw BadArgumentError("run_sweep: parameter must be 'lambda' or 'alpha'");
    }
    SweepGrid grid;
    grid.parameter = parameter;
    for (double v : values) {
        SweepPoint point;
        point.value = v;
        try {
            recourse::RecourseConfig cfg = base_cfg;
            if (parameter == "lambda") cfg.lambda = v;
            else cfg.alpha = v;
            auto trained = recourse::train_policy(det_set.x, det_set.u, *ctx.detector, ctx.tau, *ctx.engine,
                                                  ctx.bundle->feature_std, cfg);
            point.report = evaluate_policy(ctx, det_set, trained.policy);
        } catch (const std::exception& e) {
            point.failed = true;
            point.error = e.what();
        }
        grid.points.push_back(std::move(point));
    }
    return grid;
}

std::vector<double> default_lambda_values(detect::DetectorKind kind) {
    if (kind == detect::DetectorKind::ae) return {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    return {1.0, 1e-1, 1e-2, 1e-3, 5e-4, 1e-4, 1e-5};
}

std::vector<double> default_alpha_values() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

namespace {

std::string fmt_cell(double v, bool integer) {
    char buf[64];
    if (integer) std::snprintf(buf, sizeof(buf), "%.0f", v);
    else std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

std::string case_report(const std::vector<std::string>& feature_names, const std::string& label_name,
                        bool integer_label, std::span<const double> x, std::span<const double> theta,
                        std::span<const double> cf_engine, std::span<const double> cf_exact,
                        std::span<const std::size_t> actionable, const data::LabelRule& rule) {
    const std::size_t d = feature_names.size();
    std::vector<bool> is_actionable(d, false);
    for (std::size_t a : actionable) is_actionable[a] = true;

    std::vector<std::string> row_names{"x", "theta", "x(theta) engine", "x(theta) scm"};
    std::vector<std::vector<std::string>> cells(4, std::vector<std::string>(d + 1));
    for (std::size_t i = 0; i < d; ++i) {
        cells[0][i] = fmt_cell(x[i], false);
        cells[1][i] = is_actionable[i] ? fmt_cell(theta[i], false) : "/";
        cells[2][i] = fmt_cell(cf_engine[i], false);
        cells[3][i] = fmt_cell(cf_exact[i], false);
    }
    cells[0][d] = fmt_cell(rule.value(x), integer_label);
    cells[1][d] = "/";
    cells[2][d] = fmt_cell(rule.value(cf_engine), integer_label);
    cells[3][d] = fmt_cell(rule.value(cf_exact), integer_label);

    std::vector<std::string> header = feature_names;
    header.push_back(label_name);

    std::vector<std::size_t> width(d + 1);
    std::size_t name_width = 0;
    for (const auto& rn : row_names) name_width = std::max(name_width, rn.size());
    for (std::size_t c = 0; c <= d; ++c) {
        width[c] = header[c].size();
        for (std::size_t rr = 0; rr < 4; ++rr) width[c] = std::max(width[c], cells[rr][c].size());
    }

    std::ostringstream out;
    out << std::string(name_width, ' ');
    for (std::size_t c = 0; c <= d; ++c) out << "  " << std::string(width[c] - header[c].size(), ' ') << header[c];
    out << "\n";
    for (std::size_t rr = 0; rr < 4; ++rr) {
        out << row_names[rr] << std::string(name_width - row_names[rr].size(), ' ');
        for (std::size_t c = 0; c <= d; ++c) {
            out << "  " << std::string(width[c] - cells[rr][c].size(), ' ') << cells[rr][c];
        }
        out << "\n";
    }
    return out.str();
}

Aggregate aggregate(std::span<const double> values) {
    if (values.empty()) throw ValidationError("aggregate: empty input");
    Aggregate a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(var / static_cast<double>(values.size()));
    return a;
}

namespace {

std::string report_row(const FlipReport& r) {
    std::string out = std::to_string(r.n_detected) + "," + format_double(r.flip_detector) + "," +
                      format_double(r.flip_ground_truth) + ",";
    out += r.norm_mean ? format_double(*r.norm_mean) : "";
    out += ",";
    out += r.norm_std ? format_double(*r.norm_std) : "";
    return out;
}

}  // namespace

void write_flip_reports_csv(const std::filesystem::path& path, const std::vector<std::string>& row_names,
                            const std::vector<FlipReport>& reports) {
    if (row_names.size() != reports.size()) throw ValidationError("write_flip_reports_csv: name/report mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "run,n_detected,flip_detector,flip_ground_truth,norm_mean,norm_std\n";
    for (std::size_t i = 0; i < reports.size(); ++i) out << row_names[i] << "," << report_row(reports[i]) << "\n";
}

void write_sweep_csv(const std::filesystem::path& path, const SweepGrid& grid) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "parameter,value,failed,n_detected,flip_detector,flip_ground_truth,norm_mean,norm_std\n";
    for (const auto& p : grid.points) {
        out << grid.parameter << "," << format_double(p.value) << "," << (p.failed ? 1 : 0) << ","
            << report_row(p.report) << "\n";
    }
}

}  // namespace carve::eval
