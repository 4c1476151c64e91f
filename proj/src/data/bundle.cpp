#include "carve/data/bundle.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace carve::data {

namespace fs = std::filesystem;

std::vector<double> column_std(const Matrix& m) {
    if (m.rows < 2) throw ValidationError("column_std: need at least 2 rows");
    std::vector<double> out(m.cols);
    for (std::size_t c = 0; c < m.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < m.rows; ++r) mean += m.at(r, c);
        mean /= static_cast<double>(m.rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < m.rows; ++r) {
            double d = m.at(r, c) - mean;
            ss += d * d;
        }
        out[c] = std::sqrt(ss / static_cast<double>(m.rows - 1));
        if (!(out[c] > 0.0)) throw ValidationError("column_std: feature " + std::to_string(c) + " is constant");
    }
    return out;
}

namespace {

void fill_split(const scm::Scm& scm, const LabelRule& rule, std::uint64_t seed, const char* tag, std::size_t count,
                bool want_normal, Matrix& x_out, Matrix& u_out, std::vector<double>* raw_out,
                GenDiagnostics& diag) {
    const std::size_t d = scm.size();
    std::uint64_t split_seed = named_stream(seed, tag);
    std::vector<double> u(d), x(d);
    std::size_t window_attempts = 0, window_accepts = 0;
    for (std::size_t r = 0; r < count; ++r) {
        Rng rng = derive_stream(split_seed, r);
        for (;;) {
            ++diag.attempts;
            ++window_attempts;
            for (std::size_t i = 0; i < d; ++i) u[i] = scm.noise(i).sample(rng);
            scm.evaluate(u, x);
            bool finite = true;
            for (double v : x) finite = finite && std::isfinite(v);
            if (!finite) {
                ++diag.non_finite_redraws;
                continue;
            }
            double y = rule.value(x);
            bool keep = want_normal ? rule.is_normal(y) : rule.is_anomaly(y);
            if (keep) {
                ++diag.accepted;
                ++window_accepts;
                x_out.push_row(x);
                u_out.push_row(u);
                if (raw_out) raw_out->push_back(y);
                break;
            }
            if (window_attempts >= 1000000) {
                if (window_accepts * 1000 < window_attempts) {
                    throw ValidationError(std::string("generate_bundle: acceptance rate below 0.1% in split '") + tag +
                                          "' (" + std::to_string(window_accepts) + " accepts in " +
                                          std::to_string(window_attempts) + " attempts)");
                }
                window_attempts = 0;
                window_accepts = 0;
            }
        }
    }
}

}  // namespace

DatasetBundle generate_bundle(const scm::Scm& scm, const LabelRule& rule, const GenCounts& counts,
                              std::uint64_t seed, const std::string& dataset_kind) {
    if (counts.normal_train < 1 || counts.normal_unlabeled < 1 || counts.anomalous < 1) {
        throw ValidationError("generate_bundle: all split counts must be >= 1");
    }
    DatasetBundle b;
    b.dataset = dataset_kind;
    b.label_name = rule.name;
    b.integer_label = rule.integer_label;
    b.feature_names = scm.graph().names();
    b.counts = counts;
    b.seed = seed;

    fill_split(scm, rule, seed, "train_normal", counts.normal_train, true, b.train_x, b.train_u, nullptr, b.diag);
    fill_split(scm, rule, seed, "unlabeled_normal", counts.normal_unlabeled, true, b.unl_x, b.unl_u, &b.unl_raw,
               b.diag);
    fill_split(scm, rule, seed, "unlabeled_anomalous", counts.anomalous, false, b.unl_x, b.unl_u, &b.unl_raw, b.diag);

    b.unl_labels.assign(counts.normal_unlabeled, 0);
    b.unl_labels.insert(b.unl_labels.end(), counts.anomalous, 1);
    b.feature_std = column_std(b.train_x);
    return b;
}

DatasetBundle gen_loan(const GenCounts& counts, std::uint64_t seed) {
    return generate_bundle(loan_scm(), loan_rule(), counts, seed, "loan");
}

DatasetBundle gen_adult(const GenCounts& counts, std::uint64_t seed) {
    return generate_bundle(adult_scm(), adult_rule(), counts, seed, "adult");
}

scm::Scm scm_for_bundle(const DatasetBundle& b) {
    if (b.dataset == "loan") return loan_scm();
    if (b.dataset == "adult") return adult_scm();
    if (b.dataset == "custom") return scm::Scm::from_json(b.custom_scm);
    throw ValidationError("scm_for_bundle: unknown dataset '" + b.dataset + "'");
}

LabelRule rule_from_json(const nlohmann::json& j) {
    LabelRule r;
    r.name = j.value("name", "Y");
    std::string kind = j.at("kind").get<std::string>();
    auto weights = j.at("weights").get<std::vector<double>>();
    double bias = j.value("bias", 0.0);
    if (kind == "logistic") {
        double coef = j.value("coef", 1.0);
        r.value = [weights, bias, coef](std::span<const double> x) {
            double acc = bias;
            for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x[i];
            return 1.0 / (1.0 + std::exp(-coef * acc));
        };
        double norm_min = j.at("normal_min").get<double>();
        double anom_max = j.at("anomaly_max").get<double>();
        if (!(anom_max <= norm_min)) throw ValidationError("label rule: overlapping normal/anomaly bands");
        r.is_normal = [norm_min](double y) { return y > norm_min; };
        r.is_anomaly = [anom_max](double y) { return y < anom_max; };
    } else if (kind == "linear_threshold") {
        double threshold = j.at("threshold").get<double>();
        bool anomaly_above = j.value("anomaly_above", true);
        r.value = [weights, bias](std::span<const double> x) {
            double acc = bias;
            for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x[i];
            return acc;
        };
        if (anomaly_above) {
            r.is_normal = [threshold](double y) { return y <= threshold; };
            r.is_anomaly = [threshold](double y) { return y > threshold; };
        } else {
            r.is_normal = [threshold](double y) { return y >= threshold; };
            r.is_anomaly = [threshold](double y) { return y < threshold; };
        }
    } else {
        throw ValidationError("label rule: unknown kind '" + kind + "'");
    }
    return r;
}

LabelRule rule_for_bundle(const DatasetBundle& b) {
    if (b.dataset == "loan") return loan_rule();
    if (b.dataset == "adult") return adult_rule();
    if (b.dataset == "custom") {
        if (!b.custom_scm.contains("label")) throw ValidationError("custom scm: missing label rule");
        return rule_from_json(b.custom_scm.at("label"));
    }
    throw ValidationError("rule_for_bundle: unknown dataset '" + b.dataset + "'");
}

// ---- CSV + manifest IO ----

namespace {

void write_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << format_double(m.at(r, c));
        out << "\n";
    }
    if (!out) throw IoError("write failed on " + path.string());
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

Matrix read_csv(const fs::path& path, const std::vector<std::string>& expected_header) {
    std::ifstream in(path);
    if (!in) throw IoError("missing file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ":1: empty file");
    auto header = split_line(line);
    if (header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw IoError(path.string() + ":1: header mismatch, expected '" + want + "' got '" + line + "'");
    }
    Matrix m(0, expected_header.size());
    std::size_t lineno = 1;
    std::vector<double> row(expected_header.size());
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != expected_header.size()) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(expected_header.size()) + " columns, got " + std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            row[c] = parse_double(cells[c], path.string() + ":" + std::to_string(lineno));
        }
        m.push_row(row);
    }
    return m;
}

}  // namespace

void write_bundle(const DatasetBundle& b, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    std::vector<std::string> noise_header;
    for (const auto& n : b.feature_names) noise_header.push_back("u_" + n);

    write_csv(dir / "train_features.csv", b.feature_names, b.train_x);
    write_csv(dir / "train_noise.csv", noise_header, b.train_u);
    write_csv(dir / "unlabeled_features.csv", b.feature_names, b.unl_x);
    write_csv(dir / "unlabeled_noise.csv", noise_header, b.unl_u);

    {
        std::ofstream out(dir / "unlabeled_labels.csv");
        if (!out) throw IoError("cannot open " + (dir / "unlabeled_labels.csv").string() + " for writing");
        out << "row_index,ground_truth_label," << b.label_name << "\n";
        for (std::size_t r = 0; r < b.unl_labels.size(); ++r) {
            out << r << "," << b.unl_labels[r] << "," << format_double(b.unl_raw[r]) << "\n";
        }
    }

    nlohmann::json manifest{{"dataset", b.dataset},
                            {"label_name", b.label_name},
                            {"integer_label", b.integer_label},
                            {"feature_names", b.feature_names},
                            {"counts",
                             {{"normal_train", b.counts.normal_train},
                              {"normal_unlabeled", b.counts.normal_unlabeled},
                              {"anomalous", b.counts.anomalous}}},
                            {"seed", b.seed}};
    if (b.dataset == "custom") manifest["scm"] = b.custom_scm;
    std::ofstream mout(dir / "manifest.json");
    if (!mout) throw IoError("cannot open " + (dir / "manifest.json").string() + " for writing");
    mout << manifest.dump(2) << "\n";
}

DatasetBundle read_bundle(const fs::path& dir) {
    fs::path mpath = dir / "manifest.json";
    std::ifstream min(mpath);
    if (!min) throw IoError("missing file " + mpath.string());
    nlohmann::json manifest;
    try {
        min >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(mpath.string() + ": invalid json: " + e.what());
    }

    DatasetBundle b;
    b.dataset = manifest.at("dataset").get<std::string>();
    b.label_name = manifest.at("label_name").get<std::string>();
    b.integer_label = manifest.value("integer_label", false);
    b.feature_names = manifest.at("feature_names").get<std::vector<std::string>>();
    b.counts.normal_train = manifest.at("counts").at("normal_train").get<std::size_t>();
    b.counts.normal_unlabeled = manifest.at("counts").at("normal_unlabeled").get<std::size_t>();
    b.counts.anomalous = manifest.at("counts").at("anomalous").get<std::size_t>();
    b.seed = manifest.at("seed").get<std::uint64_t>();
    if (b.dataset == "custom") b.custom_scm = manifest.at("scm");

    std::vector<std::string> noise_header;
    for (const auto& n : b.feature_names) noise_header.push_back("u_" + n);

    b.train_x = read_csv(dir / "train_features.csv", b.feature_names);
    b.train_u = read_csv(dir / "train_noise.csv", noise_header);
    b.unl_x = read_csv(dir / "unlabeled_features.csv", b.feature_names);
    b.unl_u = read_csv(dir / "unlabeled_noise.csv", noise_header);

    if (b.train_u.rows != b.train_x.rows) {
        throw IoError("row count mismatch: train_noise.csv has " + std::to_string(b.train_u.rows) +
                      " rows, train_features.csv has " + std::to_string(b.train_x.rows));
    }
    if (b.unl_u.rows != b.unl_x.rows) {
        throw IoError("row count mismatch: unlabeled_noise.csv has " + std::to_string(b.unl_u.rows) +
                      " rows, unlabeled_features.csv has " + std::to_string(b.unl_x.rows));
    }

    {
        fs::path lpath = dir / "unlabeled_labels.csv";
        std::ifstream in(lpath);
        if (!in) throw IoError("missing file " + lpath.string());
        std::string line;
        if (!std::getline(in, line)) throw IoError(lpath.string() + ":1: empty file");
        std::string expected = "row_index,ground_truth_label," + b.label_name;
        if (split_line(line) != split_line(expected)) {
            throw IoError(lpath.string() + ":1: header mismatch, expected '" + expected + "'");
        }
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto cells = split_line(line);
            if (cells.size() != 3) throw IoError(lpath.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
            std::size_t idx = static_cast<std::size_t>(parse_double(cells[0], lpath.string()));
            if (idx != b.unl_labels.size()) {
                throw IoError(lpath.string() + ":" + std::to_string(lineno) + ": non-sequential row_index");
            }
            b.unl_labels.push_back(static_cast<int>(parse_double(cells[1], lpath.string())));
            b.unl_raw.push_back(parse_double(cells[2], lpath.string() + ":" + std::to_string(lineno)));
        }
        if (b.unl_labels.size() != b.unl_x.rows) {
            throw IoError(lpath.string() + ": row count mismatch with unlabeled_features.csv (" +
                          std::to_string(b.unl_labels.size()) + " vs " + std::to_string(b.unl_x.rows) + ")");
        }
    }

    b.feature_std = column_std(b.train_x);
    return b;
}

}  // namespace carve::data
