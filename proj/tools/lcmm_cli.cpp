// lcmm: command-line front end for the latent class mixed model pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lcmm/lcmm.hpp"

namespace fs = std::filesystem;
using namespace lcmm;

namespace {

struct Global {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out_dir = ".";
    bool svg = false;
};

// Inputs read so far, as (label, digest), for provenance lines.
struct Inputs {
    std::vector<std::pair<std::string, std::string>> items;

    std::string read(const std::string& label, const std::string& path) {
        auto content = lcmm::detail::read_file(path);
        items.push_back({label, text::hex64(text::fnv1a(content))});
        return content;
    }
};

std::string provenance_line(const std::string& command, const Global& g, const Inputs& in) {
    std::string s = "# lcmm " LCMM_VERSION " command=" + command + " seed=" + std::to_string(g.seed);
    for (const auto& [label, digest] : in.items) s += " " + label + "=" + digest;
    return s;
}

class Output {
public:
    Output(const Global& g, std::string command, const Inputs& in)
        : dir_(g.out_dir), line_(provenance_line(command, g, in)) {
        fs::create_directories(dir_);
    }

    // Writes a tabular file with a provenance comment as its first line.
    template <typename F>
    void table(const std::string& name, F&& body) const {
        std::ostringstream os;
        os << line_ << '\n';
        body(os);
        put(name, os.str());
    }

    void put(const std::string& name, const std::string& content) const {
        const auto path = fs::path(dir_) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write " + path.string());
        f << content;
        std::cerr << "wrote " << path.string() << '\n';
    }

    const std::string& line() const { return line_; }

private:
    std::string dir_;
    std::string line_;
};

Cohort load_cohort(Inputs& in, const std::string& data, const std::string& events, const std::string& report_path,
                   std::vector<EventRecord>* events_out = nullptr) {
    IngestOptions opt;
    if (!events.empty()) opt.events = parse_events(in.read("events", events), events);
    if (events_out) *events_out = opt.events;
    auto res = parse_longitudinal(in.read("data", data), data, opt);
    if (report_path.empty()) {
        write_filter_report(res.report, std::cerr);
    } else {
        std::ofstream f(report_path, std::ios::binary);
        if (!f) throw DataError("cannot write " + report_path);
        write_filter_report(res.report, f);
    }
    if (res.cohort.subjects.empty()) throw DataError(data + ": no subjects pass the inclusion rules");
    return std::move(res.cohort);
}

Trend parse_trend(const std::string& s) {
    if (s == "linear") return Trend::linear;
    if (s == "quadratic") return Trend::quadratic;
    throw CLI::ValidationError("--trend", "expected linear or quadratic, got '" + s + "'");
}

std::vector<int> parse_class_range(const std::string& s) {
    std::vector<int> out;
    if (auto dots = s.find(".."); dots != std::string::npos) {
        auto lo = text::parse_int(s.substr(0, dots));
        auto hi = text::parse_int(s.substr(dots + 2));
        if (!lo || !hi || *lo < 1 || *hi < *lo) throw CLI::ValidationError("--classes", "bad range '" + s + "'");
        for (long long g = *lo; g <= *hi; ++g) out.push_back(static_cast<int>(g));
        return out;
    }
    for (auto part : text::split(s)) {
        auto g = text::parse_int(part);
        if (!g || *g < 1) throw CLI::ValidationError("--classes", "bad class count '" + std::string(part) + "'");
        out.push_back(static_cast<int>(*g));
    }
    return out;
}

struct SpecFlags {
    int classes = 4;
    std::string trend = "quadratic";
    std::string variance = "shared";
    bool log_transform = false;
    bool no_interaction = false;
    bool treatment_quadratic = false;

    void add(CLI::App* app, bool with_classes) {
        if (with_classes) app->add_option("--classes", classes, "number of latent classes")->check(CLI::PositiveNumber);
        app->add_option("--variance", variance, "random-effect/residual variance: shared | class-specific")
            ->check(CLI::IsMember({"shared", "class-specific"}));
        app->add_flag("--log-transform", log_transform, "model log(value)");
        app->add_flag("--no-treatment-interaction", no_interaction, "drop the treatment x time term");
        app->add_flag("--treatment-quadratic", treatment_quadratic, "add a treatment x time^2 term");
    }

    ModelSpec spec() const {
        ModelSpec s;
        s.n_classes = classes;
        s.trend = parse_trend(trend);
        s.variance_sharing = variance == "shared" ? VarianceSharing::shared : VarianceSharing::class_specific;
        s.log_transform = log_transform;
        s.treatment_interaction = !no_interaction;
        s.treatment_quadratic = treatment_quadratic;
        return s;
    }
};

void km_svg(const std::vector<std::pair<std::string, KmCurve>>& curves, const Output& out) {
    std::vector<svg::Series> series;
    for (const auto& [name, c] : curves) {
        svg::Series s{name, {0.0}, {1.0}, true, false};
        svg::Series lo{"", {0.0}, {1.0}, true, true}, hi = lo;
        for (std::size_t i = 0; i < c.event_times.size(); ++i) {
            s.x.push_back(c.event_times[i]);
            s.y.push_back(c.survival[i]);
            lo.x.push_back(c.event_times[i]);
            lo.y.push_back(c.ci_lower[i]);
            hi.x.push_back(c.event_times[i]);
            hi.y.push_back(c.ci_upper[i]);
        }
        series.push_back(s);
        series.push_back(lo);
        series.push_back(hi);
    }
    std::ostringstream os;
    svg::write_chart(series, "Kaplan-Meier survival by class", "years", "survival", os);
    out.put("km.svg", os.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lcmm " LCMM_VERSION ": latent class mixed models for longitudinal biomarkers and their "
                 "association with time-to-event outcomes"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--seed", g.seed, "seed for every randomized step")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "directory for output files")->capture_default_str();
    app.add_flag("--svg", g.svg, "also render simple SVG charts where applicable");
    app.set_version_flag("--version", LCMM_VERSION);

    // simulate
    auto* sim = app.add_subcommand("simulate",
                                   "simulate a cohort; writes longitudinal.csv, events.csv, survival.csv "
                                   "(with a risk score column), truth.json and labels.csv");
    std::size_t sim_n = 800;
    std::string sim_preset = "default";
    std::vector<double> sim_hazards;
    double sim_score_sd = 1.0, sim_score_log_hr = 0.0;
    sim->add_option("--n", sim_n, "number of subjects")->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--preset", sim_preset, "generating truth: default (4 classes) | two-class")
        ->check(CLI::IsMember({"default", "two-class"}))
        ->capture_default_str();
    sim->add_option("--hazards", sim_hazards, "per-class event rates per year (overrides the preset)");
    sim->add_option("--score-sd", sim_score_sd, "SD of the simulated risk score")->capture_default_str();
    sim->add_option("--score-log-hr", sim_score_log_hr, "log hazard ratio per unit of risk score")
        ->capture_default_str();

    // fit
    auto* fitc = app.add_subcommand("fit",
                                    "fit a latent class mixed model; writes model.json and trajectories.tsv "
                                    "(class mean curves on a 30-day grid)");
    std::string data, events, report, model_path;
    SpecFlags sf;
    int starts = 10, max_iter = 500;
    fitc->add_option("--data", data, "longitudinal CSV: subject_id,time_days,value")->required();
    fitc->add_option("--events", events, "events CSV: subject_id,event_time_days,status");
    fitc->add_option("--report", report, "write the ingest filter report here instead of stderr");
    fitc->add_option("--trend", sf.trend, "linear | quadratic")->capture_default_str();
    fitc->add_option("--starts", starts, "number of random starts")->check(CLI::PositiveNumber)->capture_default_str();
    fitc->add_option("--max-iter", max_iter, "BFGS iteration limit per start")->capture_default_str();
    sf.add(fitc, true);

    // select
    auto* sel = app.add_subcommand("select",
                                   "fit a grid of class counts and trends; writes selection.tsv (log-likelihood, "
                                   "AIC, BIC per cell) and class_counts.tsv");
    std::string sel_classes = "1..5", sel_trends = "linear,quadratic";
    sel->add_option("--data", data, "longitudinal CSV")->required();
    sel->add_option("--events", events, "events CSV");
    sel->add_option("--report", report, "ingest filter report path");
    sel->add_option("--classes", sel_classes, "class counts, e.g. 1..5 or 1,2,4")->capture_default_str();
    sel->add_option("--trend", sel_trends, "comma-separated trends")->capture_default_str();
    sel->add_option("--starts", starts, "random starts per fit")->check(CLI::PositiveNumber)->capture_default_str();
    sel->add_option("--max-iter", max_iter, "BFGS iteration limit per start")->capture_default_str();
    sf.add(sel, false);

    // classify
    auto* cls = app.add_subcommand("classify",
                                   "posterior class probabilities with frozen parameters; writes "
                                   "classification.csv (subject_id,prob_1..prob_G,assigned), discrimination.tsv "
                                   "(mean posterior by assigned class) and class_summary.tsv");
    std::int64_t window_days = -1;
    cls->add_option("--model", model_path, "model.json from fit")->required();
    cls->add_option("--data", data, "longitudinal CSV")->required();
    cls->add_option("--events", events, "events CSV");
    cls->add_option("--report", report, "ingest filter report path");
    cls->add_option("--window-days", window_days, "use only measurements up to this day (default: all)");

    // gof
    auto* gof = app.add_subcommand("gof",
                                   "binned goodness of fit; writes gof.tsv (per bin and class: weight, weighted "
                                   "observed mean, weighted predicted mean, weighted q05/q95 of observations)");
    double bin_days = 182.625;
    bool conditional = false;
    gof->add_option("--model", model_path, "model.json")->required();
    gof->add_option("--data", data, "longitudinal CSV")->required();
    gof->add_option("--events", events, "events CSV");
    gof->add_option("--report", report, "ingest filter report path");
    gof->add_option("--bin-days", bin_days, "bin width in days")->capture_default_str();
    gof->add_flag("--conditional", conditional, "predictions include subject random effects");

    // km
    auto* km = app.add_subcommand("km",
                                  "Kaplan-Meier curves per class; writes km.tsv (group, time_years, at_risk, "
                                  "events, survival, ci_lower, ci_upper)");
    std::string classification;
    bool plain_ci = false;
    km->add_option("--classification", classification, "classification.csv")->required();
    km->add_option("--events", events, "events CSV")->required();
    km->add_flag("--plain-ci", plain_ci, "plain Greenwood intervals instead of log(-log)");

    // cox
    auto* cox = app.add_subcommand("cox",
                                   "Cox model on class dummies (class 1 reference); writes cox.txt (aligned "
                                   "table) and cox.tsv");
    bool breslow = false;
    cox->add_option("--classification", classification, "classification.csv")->required();
    cox->add_option("--events", events, "events CSV")->required();
    cox->add_flag("--breslow", breslow, "Breslow ties instead of Efron");

    // auc-compare
    auto* auc = app.add_subcommand("auc-compare",
                                   "cross-validated horizon AUC of a risk score with and without windowed class "
                                   "membership; writes auc_compare.tsv");
    std::string survival;
    int folds = 10, bootstrap = 1000;
    double horizon = 5.0;
    std::int64_t cv_window = 365;
    auc->add_option("--model", model_path, "model.json")->required();
    auc->add_option("--data", data, "longitudinal CSV")->required();
    auc->add_option("--survival", survival, "survival CSV: subject_id,time_days,status,score")->required();
    auc->add_option("--folds", folds, "cross-validation folds")->capture_default_str();
    auc->add_option("--horizon", horizon, "horizon in years")->capture_default_str();
    auc->add_option("--window-days", cv_window, "classification window in days")->capture_default_str();
    auc->add_option("--bootstrap", bootstrap, "bootstrap resamples")->capture_default_str();
    auc->add_option("--report", report, "ingest filter report path");

    // mwu
    auto* mwu = app.add_subcommand("mwu", "Mann-Whitney U test on two single-column files; prints U, p and "
                                          "median (min-max) per group");
    std::string file_a, file_b;
    mwu->add_option("a", file_a, "first group values")->required();
    mwu->add_option("b", file_b, "second group values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    std::cerr << "lcmm " << LCMM_VERSION << '\n' << app.config_to_str(true, false);
    Inputs in;
    try {
        if (*sim) {
            SimTruth t = sim_preset == "two-class" ? two_class_truth() : default_truth();
            if (!sim_hazards.empty()) t.hazard_rates = sim_hazards;
            t.score_sd = sim_score_sd;
            t.score_log_hr = sim_score_log_hr;
            const auto s = simulate_cohort(t, sim_n, g.seed);
            Output out(g, "simulate", in);
            out.table("longitudinal.csv", [&](std::ostream& os) { write_longitudinal(s.cohort, os); });
            out.table("events.csv", [&](std::ostream& os) { write_events(s.events, os); });
            out.table("labels.csv", [&](std::ostream& os) { write_labels(s, os); });
            out.table("survival.csv", [&](std::ostream& os) {
                std::vector<SurvRow> rows;
                for (std::size_t i = 0; i < s.events.size(); ++i)
                    rows.push_back({s.events[i].subject_id, s.events[i].event_time_days, s.events[i].status,
                                    s.scores[i]});
                write_survival(rows, os);
            });
            auto j = to_json(t);
            j["seed"] = g.seed;
            j["n_subjects"] = sim_n;
            out.put("truth.json", j.dump(2) + "\n");
        } else if (*fitc) {
            const auto cohort = load_cohort(in, data, events, report);
            FitOptions fo;
            fo.n_starts = starts;
            fo.seed = g.seed;
            fo.max_iterations = max_iter;
            fo.threads = g.threads;
            const auto m = fit(cohort, sf.spec(), fo);
            Output out(g, "fit", in);
            auto j = to_json(m);
            j["provenance"] = out.line().substr(2);
            out.put("model.json", j.dump(2) + "\n");
            out.table("trajectories.tsv", [&](std::ostream& os) { write_trajectories(m, -1500, 5500, 30, os); });
            if (g.svg) {
                std::vector<svg::Series> series;
                for (int c = 1; c <= m.spec.n_classes; ++c) {
                    svg::Series s{"class " + std::to_string(c), {}, {}, false, false};
                    for (double t = -1500; t <= 5500; t += 30) {
                        s.x.push_back(t);
                        s.y.push_back(predict_mean(m, c, t));
                    }
                    series.push_back(s);
                }
                std::ostringstream os;
                svg::write_chart(series, "Class mean trajectories", "days from treatment start", "value", os);
                out.put("trajectories.svg", os.str());
            }
            std::cerr << "loglik " << text::fmt_fixed(m.loglik, 4) << " AIC " << text::fmt_fixed(m.aic, 2) << " BIC "
                      << text::fmt_fixed(m.bic, 2) << (m.converged ? "" : " (not converged)") << '\n';
            for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
        } else if (*sel) {
            const auto cohort = load_cohort(in, data, events, report);
            std::vector<Trend> trends;
            for (auto t : text::split(sel_trends)) trends.push_back(parse_trend(std::string(t)));
            FitOptions fo;
            fo.n_starts = starts;
            fo.seed = g.seed;
            fo.max_iterations = max_iter;
            fo.threads = g.threads;
            const auto rows = select_models(cohort, parse_class_range(sel_classes), trends, fo, sf.spec());
            Output out(g, "select", in);
            out.table("selection.tsv", [&](std::ostream& os) { write_selection(rows, os); });
            out.table("class_counts.tsv", [&](std::ostream& os) { write_class_counts(rows, os); });
            write_selection(rows, std::cout);
        } else if (*cls) {
            const auto m = parse_model(in.read("model", model_path));
            const auto cohort = load_cohort(in, data, events, report);
            std::optional<std::int64_t> w;
            if (window_days >= 0) w = window_days;
            const auto recs = classify_cohort(m, cohort, w, g.threads);
            const int G = m.spec.n_classes;
            Output out(g, "classify", in);
            out.table("classification.csv", [&](std::ostream& os) { write_classification(recs, G, os); });
            out.table("discrimination.tsv",
                      [&](std::ostream& os) { write_discrimination(discrimination_table(recs, G), os); });
            out.table("class_summary.tsv",
                      [&](std::ostream& os) { write_class_summary(class_summary(recs, G), os); });
            write_discrimination(discrimination_table(recs, G), std::cout);
        } else if (*gof) {
            const auto m = parse_model(in.read("model", model_path));
            const auto cohort = load_cohort(in, data, events, report);
            const auto bins =
                gof_bins(m, cohort, bin_days, conditional ? GofPrediction::conditional : GofPrediction::marginal);
            Output out(g, "gof", in);
            out.table("gof.tsv", [&](std::ostream& os) { write_gof(bins, os); });
            if (g.svg) {
                std::vector<svg::Series> series;
                for (int c = 0; c < m.spec.n_classes; ++c) {
                    svg::Series o{"observed " + std::to_string(c + 1), {}, {}, false, false};
                    svg::Series p{"predicted " + std::to_string(c + 1), {}, {}, false, true};
                    for (const auto& b : bins) {
                        const auto& cell = b.classes[static_cast<std::size_t>(c)];
                        if (!(cell.effective_weight > 0)) continue;
                        const double mid = 0.5 * (b.bin_start_days + b.bin_end_days);
                        o.x.push_back(mid);
                        o.y.push_back(cell.weighted_mean_observed);
                        p.x.push_back(mid);
                        p.y.push_back(cell.weighted_mean_predicted);
                    }
                    series.push_back(o);
                    series.push_back(p);
                }
                std::ostringstream os;
                svg::write_chart(series, "Observed and predicted class means", "days", "value", os);
                out.put("gof.svg", os.str());
            }
        } else if (*km) {
            const auto recs = parse_classification(in.read("classification", classification), classification);
            const auto ev = parse_events(in.read("events", events), events);
            const int G = n_classes_of(recs);
            const auto samples = class_samples(recs, ev, G);
            std::map<std::string, int> klass;
            for (const auto& r : recs) klass[r.subject_id] = r.assigned;
            std::vector<std::pair<std::string, KmCurve>> curves;
            for (int c = 1; c <= G; ++c) {
                std::vector<SurvSample> sub;
                for (const auto& s : samples)
                    if (klass[s.subject_id] == c) sub.push_back(s);
                if (sub.empty()) {
                    std::cerr << "warning: class " << c << " has no subjects with event records\n";
                    continue;
                }
                curves.push_back({"class_" + std::to_string(c), km_estimate(sub, plain_ci ? KmCi::plain : KmCi::log_log)});
            }
            Output out(g, "km", in);
            out.table("km.tsv", [&](std::ostream& os) { write_km(curves, os); });
            if (g.svg) km_svg(curves, out);
        } else if (*cox) {
            const auto recs = parse_classification(in.read("classification", classification), classification);
            const auto ev = parse_events(in.read("events", events), events);
            const int G = n_classes_of(recs);
            CoxOptions co;
            co.ties = breslow ? Ties::breslow : Ties::efron;
            const auto f = class_cox(recs, ev, G, co);
            const auto rows = class_risk_table(f, G);
            Output out(g, "cox", in);
            out.table("cox.txt", [&](std::ostream& os) { write_class_risk_table(rows, os); });
            out.table("cox.tsv", [&](std::ostream& os) { write_cox(f, os); });
            write_class_risk_table(rows, std::cout);
        } else if (*auc) {
            const auto m = parse_model(in.read("model", model_path));
            const auto rows = parse_survival(in.read("survival", survival), survival);
            std::vector<EventRecord> ev;
            std::map<std::string, double> score;
            for (const auto& r : rows) {
                if (!r.score) throw DataError(survival + ": a score column is required");
                ev.push_back({r.subject_id, r.time_days, r.status});
                score[r.subject_id] = *r.score;
            }
            IngestOptions io;
            io.events = ev;
            auto res = parse_longitudinal(in.read("data", data), data, io);
            if (report.empty()) write_filter_report(res.report, std::cerr);
            Cohort cohort;
            cohort.provenance = res.cohort.provenance;
            std::vector<double> scores;
            for (auto& s : res.cohort.subjects) {
                if (!s.event) {
                    std::cerr << "warning: subject " << s.id << " has no survival record; skipped\n";
                    continue;
                }
                scores.push_back(score.at(s.id));
                cohort.subjects.push_back(std::move(s));
            }
            CvOptions cv;
            cv.folds = folds;
            cv.seed = g.seed;
            cv.horizon_years = horizon;
            cv.window_end_days = cv_window;
            cv.bootstrap = bootstrap;
            cv.threads = g.threads;
            const auto rep = cv_auc_compare(cohort, scores, m, cv);
            Output out(g, "auc-compare", in);
            out.table("auc_compare.tsv", [&](std::ostream& os) { write_cv_report(rep, os); });
            write_cv_report(rep, std::cout);
        } else if (*mwu) {
            const auto a = parse_values(in.read("a", file_a), file_a);
            const auto b = parse_values(in.read("b", file_b), file_b);
            const auto r = mann_whitney_u(a, b);
            const auto ma = median_range(a), mb = median_range(b);
            auto num = [](double v) { return text::fmt_sig(v, 6); };
            std::cout << "U_a\t" << num(r.u_a) << "\nU_b\t" << num(r.u_b) << "\np_two_sided\t"
                      << text::fmt_sig(r.p_two_sided, 4) << "\nmethod\t" << to_string(r.method) << "\na\t"
                      << num(ma.median) << " (" << num(ma.min) << "-" << num(ma.max) << ")\nb\t" << num(mb.median)
                      << " (" << num(mb.min) << "-" << num(mb.max) << ")\n";
        }
    } catch (const lcmm::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
