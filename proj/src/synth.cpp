#include "textcausal/synth.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "textcausal/errors.hpp"
#include "textcausal/rng.hpp"

namespace textcausal {

namespace {

std::string zpad_id(const char* prefix, int i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
    return buf;
}

std::string term_name(int v) { return zpad_id("w", v, 4); }

std::vector<std::pair<int, int>> counts_to_row(const std::map<int, int>& counts) {
    return {counts.begin(), counts.end()};
}

Eigen::VectorXd softmax_vec(Eigen::VectorXd x) {
    double mx = x.maxCoeff();
    Eigen::VectorXd e = (x.array() - mx).exp();
    return e / e.sum();
}

}  // namespace

Eigen::MatrixXd sample_topic_beta(int K, int V, double conc, double anchor_mass,
                                  std::mt19937_64& eng) {
    std::gamma_distribution<double> gam(conc, 1.0);
    Eigen::MatrixXd beta(K, V);
    for (int k = 0; k < K; k++) {
        for (int v = 0; v < V; v++) beta(k, v) = gam(eng) + 1e-8;
        beta.row(k) /= beta.row(k).sum();
        // one private anchor word per topic keeps recovery well-posed
        beta.row(k) *= (1.0 - anchor_mass);
        beta(k, k % V) += anchor_mass;
    }
    return beta;
}

std::vector<std::vector<std::pair<int, int>>> sample_counts(const Eigen::MatrixXd& beta,
                                                            const Eigen::MatrixXd& eta,
                                                            double len_mean,
                                                            std::mt19937_64& eng) {
    const int K = (int)beta.rows();
    const Eigen::Index D = eta.rows();
    std::poisson_distribution<int> len(len_mean);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<std::pair<int, int>>> rows;
    rows.reserve((std::size_t)D);
    for (Eigen::Index i = 0; i < D; i++) {
        Eigen::VectorXd full(K);
        full.head(K - 1) = eta.row(i).transpose();
        full[K - 1] = 0.0;
        Eigen::VectorXd theta = softmax_vec(full);
        int n = len(eng);
        std::map<int, int> counts;
        for (int t = 0; t < n; t++) {
            double u = unif(eng);
            int z = K - 1;
            double acc = 0;
            for (int k = 0; k < K; k++) {
                acc += theta[k];
                if (u <= acc) {
                    z = k;
                    break;
                }
            }
            double u2 = unif(eng);
            double acc2 = 0;
            int w = (int)beta.cols() - 1;
            for (int v = 0; v < (int)beta.cols(); v++) {
                acc2 += beta(z, v);
                if (u2 <= acc2) {
                    w = v;
                    break;
                }
            }
            counts[w]++;
        }
        rows.push_back(counts_to_row(counts));
    }
    return rows;
}

StmSynth sample_stm_corpus(const StmSynthSpec& spec) {
    auto eng = make_engine(spec.seed);
    const int K = spec.K, V = spec.V, D = spec.D, Km1 = K - 1;

    StmSynth s;
    s.beta = sample_topic_beta(K, V, spec.dirichlet_conc, spec.anchor_mass, eng);

    const int P = spec.with_treatment ? 3 : 2;  // intercept, group [, treatment]
    std::normal_distribution<double> gnorm(0.0, spec.gamma_sd);
    s.gamma = Eigen::MatrixXd::Zero(P, Km1);
    for (int p = 1; p < P; p++)
        for (int k = 0; k < Km1; k++) s.gamma(p, k) = gnorm(eng);

    std::bernoulli_distribution flip(0.5);
    std::normal_distribution<double> noise(0.0, std::sqrt(spec.sigma_scale));
    s.eta.resize(D, Km1);
    s.corpus.text_role = TextRole::outcome;
    for (int i = 0; i < D; i++) {
        Document d;
        d.id = zpad_id("d", i, 5);
        double grp = flip(eng) ? 1.0 : 0.0;
        d.covariates["group"] = grp;
        Eigen::RowVectorXd x(P);
        x[0] = 1.0;
        x[1] = grp;
        if (spec.with_treatment) {
            double tr = flip(eng) ? 1.0 : 0.0;
            d.treatment = tr;
            x[2] = tr;
        }
        Eigen::RowVectorXd mu = x * s.gamma;
        for (int k = 0; k < Km1; k++) s.eta(i, k) = mu[k] + noise(eng);
        if (spec.with_treatment && *d.treatment > 0.5)
            s.eta(i, 0) += spec.treatment_effect;
        s.corpus.documents.push_back(std::move(d));
    }

    s.corpus.rows = sample_counts(s.beta, s.eta, spec.doc_len_mean, eng);
    for (int v = 0; v < V; v++) s.corpus.vocabulary.push_back(term_name(v));
    s.corpus.tok_config = TokenizerConfig{};  // marks the dtm as populated
    for (int i = 0; i < D; i++)
        if (s.corpus.rows[(std::size_t)i].empty())
            s.corpus.empty_doc_ids.push_back(s.corpus.documents[(std::size_t)i].id);

    s.theta.resize(D, K);
    for (int i = 0; i < D; i++) {
        Eigen::VectorXd full(K);
        full.head(Km1) = s.eta.row(i).transpose();
        full[Km1] = 0.0;
        s.theta.row(i) = softmax_vec(full).transpose();
    }
    return s;
}

PotentialPopulation sample_po_population(const Eigen::MatrixXd& beta,
                                         const Eigen::VectorXd& eta_shift, int n_units,
                                         double sigma_scale, double len_mean,
                                         std::uint64_t seed) {
    auto eng = make_engine(seed);
    const int K = (int)beta.rows();
    const int Km1 = K - 1;
    if (eta_shift.size() != Km1) throw ContractError("eta_shift dimension mismatch");
    std::normal_distribution<double> noise(0.0, std::sqrt(sigma_scale));

    Eigen::MatrixXd eta0(n_units, Km1), eta1(n_units, Km1);
    PotentialPopulation pop;
    for (int i = 0; i < n_units; i++) {
        pop.ids.push_back(zpad_id("u", i, 5));
        for (int k = 0; k < Km1; k++) {
            eta0(i, k) = noise(eng);
            eta1(i, k) = eta0(i, k) + eta_shift[k];
        }
    }
    pop.rows_control = sample_counts(beta, eta0, len_mean, eng);
    pop.rows_treated = sample_counts(beta, eta1, len_mean, eng);
    return pop;
}

SibpSynth sample_sibp_data(int D, int V, std::uint64_t seed, double x_noise_sd,
                           double y_noise_sd) {
    if (V < 20) throw ContractError("sample_sibp_data: V must be at least 20");
    auto eng = make_engine(seed);
    std::bernoulli_distribution flip(0.5);
    std::normal_distribution<double> xn(0.0, x_noise_sd);
    std::normal_distribution<double> yn(0.0, y_noise_sd);

    SibpSynth s;
    s.A = Eigen::MatrixXd::Zero(2, V);
    for (int v = 0; v < 10; v++) s.A(0, v) = 2.0;
    for (int v = 10; v < 20; v++) s.A(1, v) = 2.0;

    s.Z.resize(D, 2);
    s.X.resize(D, V);
    s.Y.resize(D);
    for (int i = 0; i < D; i++) {
        s.Z(i, 0) = flip(eng) ? 1.0 : 0.0;
        s.Z(i, 1) = flip(eng) ? 1.0 : 0.0;
        for (int v = 0; v < V; v++) s.X(i, v) = xn(eng);
        s.X.row(i) += s.Z.row(i) * s.A;
        s.Y[i] = 2.0 * s.Z(i, 0) - 1.0 * s.Z(i, 1) + yn(eng);
    }
    return s;
}

namespace {

// phrasebooks for the bundled demo: five loose themes, arm-dependent weights
const std::vector<std::vector<const char*>> kThemes = {
    // enforcement
    {"they broke the law and should be deported immediately",
     "illegal entry is a crime and crimes have consequences",
     "send them back to their own country after the prison sentence",
     "the law must be enforced at the border without exception",
     "deport anyone who entered the country illegally"},
    // compassion
    {"families deserve compassion and a path to citizenship",
     "many came here as children and know no other home",
     "we should welcome people seeking a better life",
     "separating families is cruel and helps nobody",
     "give hardworking people a chance to stay"},
    // economy
    {"immigrants pay taxes and keep small businesses running",
     "the economy depends on immigrant labor in farms and factories",
     "wages fall when employers exploit undocumented workers",
     "legal work permits would raise tax revenue",
     "jobs report shows immigrant workers fill labor shortages"},
    // security
    {"border security keeps dangerous criminals out",
     "we need more agents patrolling the border",
     "violent offenders should never be released into communities",
     "screening at the border protects public safety",
     "smuggling networks profit from weak enforcement"},
    // process
    {"the courts are backlogged and cases take years",
     "reform the visa system so people can apply legally",
     "the hearing process is slow and underfunded",
     "judges decide each asylum case on its merits",
     "paperwork delays keep applicants waiting for decades"},
};

}  // namespace

void write_demo_jsonl(const std::string& path, int n, std::uint64_t seed) {
    auto eng = make_engine(seed);
    std::bernoulli_distribution flip(0.5);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::uniform_int_distribution<int> pick_sentence(0, 4);
    std::ofstream out(path);
    if (!out) throw ContractError("cannot write " + path);

    // treated arm leans enforcement/security, control leans compassion/economy
    const double w_treated[5] = {0.34, 0.08, 0.14, 0.30, 0.14};
    const double w_control[5] = {0.08, 0.34, 0.26, 0.10, 0.22};

    for (int i = 0; i < n; i++) {
        int treated = flip(eng) ? 1 : 0;
        const double* w = treated ? w_treated : w_control;
        std::discrete_distribution<int> theme(w, w + 5);
        std::string text;
        int n_sent = 3 + (int)(std::uniform_real_distribution<double>(0, 3)(eng));
        for (int sgmt = 0; sgmt < n_sent; sgmt++) {
            if (sgmt) text += ". ";
            text += kThemes[(std::size_t)theme(eng)][(std::size_t)pick_sentence(eng)];
        }
        text += ".";
        double age = 20.0 + 40.0 * std::uniform_real_distribution<double>(0, 1)(eng);
        double outcome = 0.5 * treated + noise(eng);
        out << "{\"id\":\"r" << i << "\",\"text\":\"" << text << "\",\"treatment\":" << treated
            << ",\"outcome\":" << outcome << ",\"covariates\":{\"age\":" << age << "}}\n";
    }
}

}  // namespace textcausal
