#include "tabuq/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tabuq/strings.hpp"

namespace tabuq {

void Dataset::validate() const {
    detail::require(x.rows() == y.size(), "Dataset: feature/label row mismatch");
    detail::require(feature_names.size() == x.cols(), "Dataset: feature name count mismatch");
    detail::require(subgroup.empty() || subgroup.size() == x.rows(),
                    "Dataset: subgroup tag count mismatch");
    for (int v : y) detail::require(v == 0 || v == 1, "Dataset: labels must be 0 or 1");
}

void SyntheticSpec::validate() const {
    detail::require(n_features >= 2, "SyntheticSpec: need at least 2 features");
    detail::require(n_train > 0 && n_test > 0, "SyntheticSpec: empty split");
    detail::require(clusters > 0, "SyntheticSpec: need at least one cluster");
    detail::require(class_prior > 0.0 && class_prior < 1.0,
                    "SyntheticSpec: class_prior must be in (0,1)");
    detail::require(label_sharpness > 0.0, "SyntheticSpec: label_sharpness must be positive");
    detail::require(subgroup_shift >= 0.0 && subgroup_cov_scale > 0.0 &&
                        subgroup_label_shift >= 0.0,
                    "SyntheticSpec: invalid subgroup definition");
}

namespace {

const char* kIcuFeatureNames[25] = {
    "age_years",   "weight_kg",   "heart_rate", "resp_rate",  "spo2",
    "temp_c",      "sbp",         "dbp",        "mean_bp",    "gcs_total",
    "urine_out",   "lactate",     "creatinine", "bun",        "sodium",
    "potassium",   "chloride",    "bicarb",     "glucose",    "hematocrit",
    "hemoglobin",  "wbc",         "platelets",  "ph_art",     "pao2",
};

std::vector<std::string> feature_names_for(std::size_t d) {
    std::vector<std::string> names;
    if (d == 25) {
        for (const char* n : kIcuFeatureNames) names.emplace_back(n);
        return names;
    }
    for (std::size_t j = 0; j < d; ++j) names.push_back("f" + std::to_string(j));
    return names;
}

// Largest shifts land on the first features (the age/weight analogues),
// with a tail of moderate shifts so masking the top two still leaves the
// subgroup displaced.
std::vector<double> shift_profile(std::size_t d) {
    static const double head[] = {1.0, 0.8, 0.6, 0.6, 0.5, 0.4, 0.4, 0.3, 0.3, 0.25};
    std::vector<double> p(d, 0.0);
    for (std::size_t j = 0; j < d && j < 10; ++j) p[j] = head[j];
    return p;
}

struct LabelModel {
    std::vector<double> beta;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<double> pair_coef;
    double scale = 1.0;
    double offset = 0.0;

    double raw_score(const double* row) const {
        double s = 0.0;
        for (std::size_t j = 0; j < beta.size(); ++j) s += beta[j] * row[j];
        for (std::size_t k = 0; k < pairs.size(); ++k)
            s += pair_coef[k] * row[pairs[k].first] * row[pairs[k].second];
        return s;
    }
    double logit(const double* row) const { return scale * raw_score(row) + offset; }
};

// Calibrates scale so the pool's logits have sd = sharpness, and offset so
// the mean predicted probability equals the class prior (bisection; the mean
// is monotone in the offset).
void calibrate(LabelModel& model, const Matrix& pool, double sharpness, double prior) {
    const std::size_t n = pool.rows();
    std::vector<double> raw(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        raw[i] = model.raw_score(pool.row_ptr(i));
        mean += raw[i];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double r : raw) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);
    model.scale = sharpness / std::sqrt(std::max(var, 1e-12));

    double lo = -30.0, hi = 30.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        double p = 0.0;
        for (double r : raw) p += sigmoid_scalar(model.scale * r + mid);
        p /= static_cast<double>(n);
        (p < prior ? lo : hi) = mid;
    }
    model.offset = 0.5 * (lo + hi);
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t d = spec.n_features;
    const std::size_t k = spec.clusters;
    Rng rng = Rng::substream(spec.seed, "data");

    // Population parameters.
    Matrix centers(k, d);
    for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = 1.2 * rng.normal();
    std::vector<Matrix> mix(k);
    const double off_diag = 0.5 / std::sqrt(static_cast<double>(d));
    for (std::size_t c = 0; c < k; ++c) {
        mix[c] = Matrix(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                mix[c](i, j) = (i == j ? 0.85 : 0.0) + off_diag * rng.normal();
    }

    LabelModel core;
    core.beta.resize(d);
    for (double& b : core.beta) b = rng.normal();
    const std::size_t n_pairs = d >= 4 ? 3 : 0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
        std::size_t a = rng.uniform_int(d), b = rng.uniform_int(d);
        while (b == a) b = rng.uniform_int(d);
        core.pairs.emplace_back(a, b);
        core.pair_coef.push_back(0.5 * rng.normal());
    }

    // The subgroup label model is a direction-perturbed copy of the core one.
    LabelModel shifted = core;
    for (std::size_t j = 0; j < d; ++j)
        shifted.beta[j] += spec.subgroup_label_shift * rng.normal();

    const auto draw_core_row = [&](double* row, std::size_t* cluster_out) {
        const std::size_t c = rng.uniform_int(k);
        std::vector<double> z(d);
        for (double& v : z) v = rng.normal();
        for (std::size_t j = 0; j < d; ++j) {
            double v = centers(c, j);
            const double* mrow = mix[c].row_ptr(j);
            for (std::size_t l = 0; l < d; ++l) v += mrow[l] * z[l];
            row[j] = v;
        }
        *cluster_out = c;
    };

    const std::size_t n_core = spec.n_train + spec.n_test;
    Matrix pool(n_core, d);
    std::vector<std::size_t> pool_cluster(n_core);
    for (std::size_t i = 0; i < n_core; ++i) draw_core_row(pool.row_ptr(i), &pool_cluster[i]);

    calibrate(core, pool, spec.label_sharpness, spec.class_prior);
    shifted.scale = core.scale;
    shifted.offset = core.offset;

    std::vector<int> pool_y(n_core);
    for (std::size_t i = 0; i < n_core; ++i)
        pool_y[i] = rng.uniform() < sigmoid_scalar(core.logit(pool.row_ptr(i))) ? 1 : 0;

    // Per-feature sd of the core pool; the shift profile is expressed in
    // these units.
    std::vector<double> feature_sd(d, 0.0);
    {
        std::vector<double> m(d, 0.0);
        for (std::size_t i = 0; i < n_core; ++i)
            for (std::size_t j = 0; j < d; ++j) m[j] += pool(i, j);
        for (double& v : m) v /= static_cast<double>(n_core);
        for (std::size_t i = 0; i < n_core; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = pool(i, j) - m[j];
                feature_sd[j] += c * c;
            }
        for (double& v : feature_sd) v = std::sqrt(v / static_cast<double>(n_core));
    }

    SyntheticData out;
    out.shift.resize(d);
    const std::vector<double> profile = shift_profile(d);
    for (std::size_t j = 0; j < d; ++j) out.shift[j] = spec.subgroup_shift * profile[j];
    out.label_coefficients.resize(d);
    for (std::size_t j = 0; j < d; ++j) out.label_coefficients[j] = core.scale * core.beta[j];

    const auto names = feature_names_for(d);
    const auto fill_split = [&](Dataset& ds, std::size_t begin, std::size_t count,
                                const char* tag) {
        ds.x = Matrix(count, d);
        ds.y.resize(count);
        ds.feature_names = names;
        ds.subgroup.assign(count, tag);
        for (std::size_t i = 0; i < count; ++i) {
            const double* from = pool.row_ptr(begin + i);
            double* to = ds.x.row_ptr(i);
            for (std::size_t j = 0; j < d; ++j) to[j] = from[j];
            ds.y[i] = pool_y[begin + i];
        }
    };
    fill_split(out.train, 0, spec.n_train, "core");
    fill_split(out.test, spec.n_train, spec.n_test, "core");

    out.ood.x = Matrix(spec.n_ood, d);
    out.ood.y.resize(spec.n_ood);
    out.ood.feature_names = names;
    out.ood.subgroup.assign(spec.n_ood, "shifted");
    std::vector<double> row(d);
    for (std::size_t i = 0; i < spec.n_ood; ++i) {
        std::size_t c = 0;
        draw_core_row(row.data(), &c);
        double* to = out.ood.x.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double centered = row[j] - centers(c, j);
            to[j] = centers(c, j) + spec.subgroup_cov_scale * centered +
                    out.shift[j] * feature_sd[j];
        }
        out.ood.y[i] = rng.uniform() < sigmoid_scalar(shifted.logit(to)) ? 1 : 0;
    }
    return out;
}

// --- CSV -------------------------------------------------------------------

namespace {

bool parse_cell(const std::string& cell, double* out) {
    const std::string t = trim(cell);
    if (t.empty() || t == "NA" || t == "na" || t == "nan") {
        *out = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) return false;
    *out = v;
    return true;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream f(path);
    detail::require(f.good(), "load_csv: cannot open " + path);

    std::string line;
    std::size_t line_no = 0;
    const auto next_line = [&]() {
        if (!std::getline(f, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    // Header, skipping leading comment lines.
    std::vector<std::string> header;
    while (next_line()) {
        if (!line.empty() && line[0] == '#') continue;
        for (auto& h : split(line, ',')) header.push_back(trim(h));
        break;
    }
    detail::require(!header.empty(), "load_csv: missing header row in " + path);

    const auto column_index = [&](const std::string& name) -> std::ptrdiff_t {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };

    const std::ptrdiff_t label_col = column_index(schema.label_column);
    detail::require(label_col >= 0,
                    "load_csv: label column '" + schema.label_column + "' not found in " + path);
    std::ptrdiff_t subgroup_col = -1;
    if (!schema.subgroup_column.empty()) {
        subgroup_col = column_index(schema.subgroup_column);
        detail::require(subgroup_col >= 0, "load_csv: subgroup column '" +
                                               schema.subgroup_column + "' not found in " + path);
    }

    std::vector<std::size_t> feature_cols;
    Dataset ds;
    if (schema.feature_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (static_cast<std::ptrdiff_t>(c) == label_col ||
                static_cast<std::ptrdiff_t>(c) == subgroup_col)
                continue;
            feature_cols.push_back(c);
            ds.feature_names.push_back(header[c]);
        }
    } else {
        for (const std::string& name : schema.feature_columns) {
            const std::ptrdiff_t c = column_index(name);
            detail::require(c >= 0, "load_csv: feature column '" + name + "' not found in " + path);
            feature_cols.push_back(static_cast<std::size_t>(c));
            ds.feature_names.push_back(name);
        }
    }
    detail::require(!feature_cols.empty(), "load_csv: no feature columns in " + path);

    std::vector<double> values;
    std::size_t n_rows = 0;
    while (next_line()) {
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> cells = split(line, ',');
        detail::require(cells.size() == header.size(),
                        "load_csv: line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
        for (std::size_t c : feature_cols) {
            double v;
            detail::require(parse_cell(cells[c], &v), "load_csv: line " + std::to_string(line_no) +
                                                          ": bad numeric cell '" + cells[c] +
                                                          "' in column '" + header[c] + "'");
            values.push_back(v);
        }
        double yv;
        detail::require(parse_cell(cells[label_col], &yv) && (yv == 0.0 || yv == 1.0),
                        "load_csv: line " + std::to_string(line_no) + ": label must be 0 or 1");
        ds.y.push_back(static_cast<int>(yv));
        ds.subgroup.push_back(subgroup_col >= 0 ? trim(cells[subgroup_col]) : "core");
        ++n_rows;
    }
    ds.x = Matrix(n_rows, feature_cols.size(), std::move(values));
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path, const std::string& comment) {
    ds.validate();
    std::ofstream f(path);
    detail::require(f.good(), "write_csv: cannot open " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    for (const auto& name : ds.feature_names) f << name << ',';
    f << "label,subgroup\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double* row = ds.x.row_ptr(i);
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            if (!std::isnan(row[j])) f << format_double(row[j]);
            f << ',';
        }
        f << ds.y[i] << ',' << (ds.subgroup.empty() ? "core" : ds.subgroup[i]) << '\n';
    }
}

// --- preprocessing ----------------------------------------------------------

double quantile_sorted(const std::vector<double>& sorted, double p) {
    detail::require(!sorted.empty(), "quantile_sorted: empty sample");
    if (sorted.size() == 1) return sorted[0];
    const double h = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - std::floor(h);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Preprocessor Preprocessor::fit(const Dataset& train, PreprocessOptions options) {
    train.validate();
    detail::require(train.n() > 0, "Preprocessor::fit: empty fit split");
    const std::size_t d = train.dim();

    Preprocessor pp;
    Standardization& st = pp.stats_;
    st.feature_names = train.feature_names;
    st.add_missing_indicators = options.add_missing_indicators;
    st.mean.assign(d, 0.0);
    st.sd.assign(d, 1.0);
    st.q1.assign(d, 0.0);
    st.q3.assign(d, 0.0);
    st.window_lo.assign(d, 0.0);
    st.window_hi.assign(d, 0.0);

    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> vals;
        vals.reserve(train.n());
        bool any_missing = false;
        for (std::size_t i = 0; i < train.n(); ++i) {
            const double v = train.x(i, j);
            if (std::isnan(v))
                any_missing = true;
            else
                vals.push_back(v);
        }
        if (any_missing) st.indicator_features.push_back(j);
        if (vals.empty()) {
            pp.warnings_.push_back("feature '" + st.feature_names[j] +
                                   "' has no observed values in the fit split");
            st.window_lo[j] = -std::numeric_limits<double>::infinity();
            st.window_hi[j] = std::numeric_limits<double>::infinity();
            continue;
        }
        std::sort(vals.begin(), vals.end());
        st.q1[j] = quantile_sorted(vals, 0.25);
        st.q3[j] = quantile_sorted(vals, 0.75);
        const double iqr = st.q3[j] - st.q1[j];
        st.window_lo[j] = st.q1[j] - 8.0 * iqr;
        st.window_hi[j] = st.q3[j] + 8.0 * iqr;
    }

    // Mean/sd come from fit rows that survive the 8-IQR rule.
    std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
    std::vector<std::size_t> count(d, 0);
    for (std::size_t i = 0; i < train.n(); ++i) {
        bool kept = true;
        for (std::size_t j = 0; j < d && kept; ++j) {
            const double v = train.x(i, j);
            if (!std::isnan(v) && (v < st.window_lo[j] || v > st.window_hi[j])) kept = false;
        }
        if (!kept) continue;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = train.x(i, j);
            if (std::isnan(v)) continue;
            sum[j] += v;
            sumsq[j] += v * v;
            ++count[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        if (count[j] == 0) continue;
        st.mean[j] = sum[j] / static_cast<double>(count[j]);
        const double var =
            std::max(0.0, sumsq[j] / static_cast<double>(count[j]) - st.mean[j] * st.mean[j]);
        if (var < 1e-24) {
            st.sd[j] = 1.0;
            pp.warnings_.push_back("feature '" + st.feature_names[j] +
                                   "' has zero variance on the fit split; sd treated as 1");
        } else {
            st.sd[j] = std::sqrt(var);
        }
    }
    return pp;
}

Preprocessor Preprocessor::from_stats(Standardization stats) {
    Preprocessor pp;
    pp.stats_ = std::move(stats);
    return pp;
}

Dataset Preprocessor::apply(const Dataset& ds) const {
    ds.validate();
    const Standardization& st = stats_;
    detail::require(ds.dim() == st.mean.size(), "Preprocessor::apply: feature count mismatch");
    const std::size_t d = ds.dim();
    const std::size_t n_ind = st.add_missing_indicators ? st.indicator_features.size() : 0;

    Dataset out;
    out.feature_names = st.feature_names;
    for (std::size_t k = 0; k < n_ind; ++k)
        out.feature_names.push_back(st.feature_names[st.indicator_features[k]] + "_missing");

    std::vector<double> values;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double* row = ds.x.row_ptr(i);
        bool kept = true;
        for (std::size_t j = 0; j < d && kept; ++j)
            if (!std::isnan(row[j]) && (row[j] < st.window_lo[j] || row[j] > st.window_hi[j]))
                kept = false;
        if (!kept) continue;
        for (std::size_t j = 0; j < d; ++j) {
            const double raw = std::isnan(row[j]) ? st.mean[j] : row[j];
            values.push_back((raw - st.mean[j]) / st.sd[j]);
        }
        for (std::size_t k = 0; k < n_ind; ++k)
            values.push_back(std::isnan(row[st.indicator_features[k]]) ? 1.0 : 0.0);
        out.y.push_back(ds.y[i]);
        out.subgroup.push_back(ds.subgroup.empty() ? "core" : ds.subgroup[i]);
    }
    out.x = Matrix(out.y.size(), d + n_ind, std::move(values));
    out.standardization = st;
    return out;
}

// --- OOD protocol ------------------------------------------------------------

std::pair<Dataset, Dataset> make_ood_holdout(const Dataset& pool, const std::string& subgroup_tag,
                                             const std::vector<std::string>& masked_features) {
    pool.validate();
    detail::require(!pool.subgroup.empty(), "make_ood_holdout: dataset carries no subgroup tags");

    std::vector<std::size_t> mask_idx;
    for (const auto& name : masked_features) {
        const auto it = std::find(pool.feature_names.begin(), pool.feature_names.end(), name);
        detail::require(it != pool.feature_names.end(),
                        "make_ood_holdout: unknown feature '" + name + "'");
        mask_idx.push_back(static_cast<std::size_t>(it - pool.feature_names.begin()));
    }

    std::vector<std::size_t> train_rows, ood_rows;
    for (std::size_t i = 0; i < pool.n(); ++i)
        (pool.subgroup[i] == subgroup_tag ? ood_rows : train_rows).push_back(i);
    detail::require(!ood_rows.empty(),
                    "make_ood_holdout: subgroup '" + subgroup_tag + "' is empty");
    detail::require(!train_rows.empty(), "make_ood_holdout: nothing left to train on");

    const auto take = [&](const std::vector<std::size_t>& rows) {
        Dataset ds;
        ds.feature_names = pool.feature_names;
        ds.x = Matrix(rows.size(), pool.dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* from = pool.x.row_ptr(rows[i]);
            double* to = ds.x.row_ptr(i);
            for (std::size_t j = 0; j < pool.dim(); ++j) to[j] = from[j];
            ds.y.push_back(pool.y[rows[i]]);
            ds.subgroup.push_back(pool.subgroup[rows[i]]);
        }
        ds.standardization = pool.standardization;
        return ds;
    };

    Dataset train = take(train_rows);
    Dataset ood = take(ood_rows);

    std::vector<double> mask_values;
    for (std::size_t j : mask_idx) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < train.n(); ++i) {
            const double v = train.x(i, j);
            if (!std::isnan(v)) {
                sum += v;
                ++cnt;
            }
        }
        mask_values.push_back(cnt > 0 ? sum / static_cast<double>(cnt) : 0.0);
    }
    ood = mask_features(ood, mask_idx, mask_values);
    return {std::move(train), std::move(ood)};
}

Dataset mask_features(const Dataset& ds, const std::vector<std::size_t>& features,
                      const std::vector<double>& values) {
    detail::require(features.size() == values.size(), "mask_features: feature/value mismatch");
    Dataset out = ds;
    for (std::size_t k = 0; k < features.size(); ++k) {
        detail::require(features[k] < ds.dim(), "mask_features: feature index out of range");
        for (std::size_t i = 0; i < out.n(); ++i) out.x(i, features[k]) = values[k];
    }
    return out;
}

std::vector<std::size_t> top_shifted_features(const std::vector<double>& shift, std::size_t k) {
    std::vector<std::size_t> idx(shift.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(shift[a]) > std::fabs(shift[b]);
    });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

}  // namespace tabuq
