#include "wicklab/cluster_graph.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "wicklab/gauss_calc.hpp"

namespace wicklab {

namespace {

double dist(const GaussianVector& gv, int i, int j) {
    return aniso_dist(gv.points[i], gv.points[j], gv.scaling);
}

// Upper sandwich bound Lambda eps^a / (d+eps)^a at the actual separation.
double upper_bound(const GaussianVector& gv, int i, int j) {
    return gv.lambda * std::pow(gv.eps, gv.alpha) /
           std::pow(dist(gv, i, j) + gv.eps, gv.alpha);
}

// Reciprocal of the lower sandwich bound: R(i,j) >= 1/lower_recip.
double lower_recip(const GaussianVector& gv, int i, int j) {
    return gv.lambda * std::pow(dist(gv, i, j) + gv.eps, gv.alpha) /
           std::pow(gv.eps, gv.alpha);
}

std::vector<int> neighbor_list(const ClusterGraph& g, int v) {
    std::vector<int> out;
    for (int u = 0; u < g.K(); ++u)
        if (u != v && g.mult(v, u) >= 1) out.push_back(u);
    return out;
}

void check_shapes(const ClusterGraph& g, const Clustering& c,
                  const GaussianVector& gv) {
    if (g.K() != c.size() || g.K() != static_cast<int>(gv.cov.rows()))
        throw std::invalid_argument("cluster_graph: mismatched sizes");
    if (gv.eps <= 0.0)
        throw std::invalid_argument("cluster_graph: gaussian vector has no eps scale");
    if (g.mult.diagonal().cwiseAbs().sum() != 0)
        throw std::invalid_argument("cluster_graph: self-loop present");
    Eigen::MatrixXi skew = g.mult - g.mult.transpose().eval();
    if (skew.cwiseAbs().sum() != 0)
        throw std::invalid_argument("cluster_graph: multiplicity matrix not symmetric");
}

// Emits a certificate for the transition before -> after and verifies the
// claimed inequality on the actual covariances.
RewriteCertificate make_certificate(const std::string& kind, double factor,
                                    double worst_factor, const ClusterGraph& before,
                                    const ClusterGraph& after,
                                    const GaussianVector& gv) {
    RewriteCertificate cert;
    cert.kind = kind;
    cert.factor = factor;
    cert.worst_factor = worst_factor;
    cert.value_before = graph_value(before, gv.cov);
    cert.value_after = graph_value(after, gv.cov);
    cert.degrees_before = before.degrees();
    cert.degrees_after = after.degrees();
    if (cert.value_before > factor * cert.value_after * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "certificate " << kind << " failed: " << cert.value_before << " > "
           << factor << " * " << cert.value_after;
        throw std::logic_error(os.str());
    }
    return cert;
}

// Shared by reduce-case-1 and reduce-a: moves one edge pair at vertex v onto
// the neighbor pair (i, i2) chosen to maximize the new edge's covariance.
void apply_pair_move(ClusterGraph& g, const GaussianVector& gv, int v,
                     const std::vector<int>& nbrs, int* out_i, int* out_i2) {
    int bi = -1, bj = -1;
    double best = -1.0;
    for (std::size_t a = 0; a < nbrs.size(); ++a)
        for (std::size_t b = a + 1; b < nbrs.size(); ++b) {
            double r = gv.cov(nbrs[a], nbrs[b]);
            if (r > best) {
                best = r;
                bi = nbrs[a];
                bj = nbrs[b];
            }
        }
    g.mult(v, bi) -= 1;
    g.mult(bi, v) -= 1;
    g.mult(v, bj) -= 1;
    g.mult(bj, v) -= 1;
    g.mult(bi, bj) += 1;
    g.mult(bj, bi) += 1;
    *out_i = bi;
    *out_i2 = bj;
}

// Claimed factor for the pair move: the near edge is bounded by the upper
// sandwich at its own separation, the far edge is re-routed to (i, i2) at
// distance ratio gamma.
void pair_move_factors(const GaussianVector& gv, double L, int v, int i, int i2,
                       double* factor, double* worst) {
    double d1 = dist(gv, v, i), d2 = dist(gv, v, i2);
    double dmin = std::min(d1, d2), dmax = std::max(d1, d2);
    double gamma = std::max(1.0, dist(gv, i, i2) / dmax);
    double lam = gv.lambda, a = gv.alpha;
    *factor = lam * std::pow(gv.eps, a) / std::pow(dmin + gv.eps, a) *
              std::pow(gamma, a) * lam * lam;
    double cs = gv.scaling.quasi_triangle_constant();
    *worst = std::pow(2.0 * cs, a) * lam * lam * lam / std::pow(L + 1.0, a);
}

} // namespace

std::vector<int> ClusterGraph::degrees() const {
    std::vector<int> out(K());
    for (int v = 0; v < K(); ++v) out[v] = degree(v);
    return out;
}

ClusterGraph empty_graph(int K) {
    ClusterGraph g;
    g.mult = Eigen::MatrixXi::Zero(K, K);
    return g;
}

double graph_value(const ClusterGraph& g, const Eigen::MatrixXd& R) {
    double v = 1.0;
    for (int i = 0; i < g.K(); ++i)
        for (int j = i + 1; j < g.K(); ++j)
            if (g.mult(i, j) > 0) v *= std::pow(R(i, j), g.mult(i, j));
    return v;
}

double log_graph_value(const ClusterGraph& g, const Eigen::MatrixXd& R) {
    double lv = 0.0;
    for (int i = 0; i < g.K(); ++i)
        for (int j = i + 1; j < g.K(); ++j)
            if (g.mult(i, j) > 0) {
                if (R(i, j) <= 0.0)
                    throw std::domain_error("log_graph_value: nonpositive edge value");
                lv += g.mult(i, j) * std::log(R(i, j));
            }
    return lv;
}

bool admissible_support(const ClusterGraph& g, const Clustering& c, int m,
                        std::string* why) {
    for (int v = 0; v < g.K(); ++v) {
        int deg = g.degree(v);
        if (c.is_singleton(v)) {
            if (deg < m) {
                if (why) {
                    std::ostringstream os;
                    os << "support: singleton vertex " << v << " has degree " << deg
                       << " < m = " << m;
                    *why = os.str();
                }
                return false;
            }
        } else if (!c.is_representative(v) && deg != 0) {
            if (why) {
                std::ostringstream os;
                os << "support: non-representative vertex " << v << " has degree "
                   << deg;
                *why = os.str();
            }
            return false;
        }
    }
    return true;
}

OmegaStarReport omega_star_member(const ClusterGraph& g, const Clustering& c,
                                  int m) {
    OmegaStarReport rep;
    std::string why;
    if (!admissible_support(g, c, m, &why)) rep.violations.push_back(why);
    for (int v = 0; v < g.K(); ++v) {
        int deg = g.degree(v);
        if (c.is_singleton(v)) {
            if (deg != m && deg != m + 1) {
                std::ostringstream os;
                os << "condition 1: singleton vertex " << v << " has degree " << deg
                   << ", required " << m << " or " << m + 1;
                rep.violations.push_back(os.str());
            }
        } else if (c.is_representative(v)) {
            if (deg > m + 1) {
                std::ostringstream os;
                os << "condition 1: representative vertex " << v << " has degree "
                   << deg << " > " << m + 1;
                rep.violations.push_back(os.str());
            }
            if (deg >= 1) {
                auto nbrs = neighbor_list(g, v);
                if (nbrs.size() != 1 || !c.is_singleton(nbrs.front())) {
                    std::ostringstream os;
                    os << "condition 2: representative vertex " << v
                       << " has edges to";
                    for (int u : nbrs) os << ' ' << u;
                    os << ", required a single singleton vertex";
                    rep.violations.push_back(os.str());
                }
            }
        }
    }
    rep.member = rep.violations.empty();
    return rep;
}

RewriteResult reduce_graph(const ClusterGraph& g, const Clustering& c, int m,
                           const GaussianVector& gv) {
    check_shapes(g, c, gv);
    std::string why;
    if (!admissible_support(g, c, m, &why)) throw std::invalid_argument(why);

    RewriteResult res;
    res.graph = g;
    int max_steps = g.total_degree() / 2 + 1;
    for (int step = 0; step <= max_steps; ++step) {
        if (omega_star_member(res.graph, c, m).member) {
            res.total_factor = 1.0;
            res.log_total_factor = 0.0;
            for (const auto& cert : res.certificates) {
                res.total_factor *= cert.factor;
                res.log_total_factor += std::log(cert.factor);
            }
            return res;
        }

        // Condition 1 first: lowest-index vertex with degree >= m+2 among
        // singletons and representatives.
        int v = -1;
        for (int u = 0; u < res.graph.K(); ++u) {
            bool eligible = c.is_singleton(u) || c.is_representative(u);
            if (eligible && res.graph.degree(u) >= m + 2) {
                v = u;
                break;
            }
        }
        if (v >= 0) {
            auto nbrs = neighbor_list(res.graph, v);
            ClusterGraph before = res.graph;
            if (nbrs.size() >= 2) {
                int i, i2;
                apply_pair_move(res.graph, gv, v, nbrs, &i, &i2);
                double f, w;
                pair_move_factors(gv, c.L, v, i, i2, &f, &w);
                res.certificates.push_back(
                    make_certificate("reduce-case-1", f, w, before, res.graph, gv));
            } else {
                int i = nbrs.front();
                res.graph.mult(v, i) -= 2;
                res.graph.mult(i, v) -= 2;
                double ub = upper_bound(gv, v, i);
                double worst = gv.lambda * gv.lambda /
                               std::pow(c.L + 1.0, 2.0 * gv.alpha);
                res.certificates.push_back(make_certificate(
                    "reduce-case-2", ub * ub, worst, before, res.graph, gv));
            }
            continue;
        }

        // Condition 2: lowest-index representative whose edges do not all go
        // to one singleton vertex.
        for (int u = 0; u < res.graph.K(); ++u) {
            if (!c.is_representative(u) || c.is_singleton(u)) continue;
            if (res.graph.degree(u) < 1) continue;
            auto nbrs = neighbor_list(res.graph, u);
            if (nbrs.size() == 1 && c.is_singleton(nbrs.front())) continue;
            ClusterGraph before = res.graph;
            if (nbrs.size() >= 2) {
                int i, i2;
                apply_pair_move(res.graph, gv, u, nbrs, &i, &i2);
                double f, w;
                pair_move_factors(gv, c.L, u, i, i2, &f, &w);
                res.certificates.push_back(
                    make_certificate("reduce-a", f, w, before, res.graph, gv));
            } else {
                int w = nbrs.front();
                res.graph.mult(u, w) -= 1;
                res.graph.mult(w, u) -= 1;
                double worst = gv.lambda / std::pow(c.L + 1.0, gv.alpha);
                res.certificates.push_back(make_certificate(
                    "reduce-b", upper_bound(gv, u, w), worst, before, res.graph, gv));
            }
            break;
        }
    }
    throw std::logic_error("reduce_graph: rewriting failed to terminate");
}

RewriteResult enhance_graph(const ClusterGraph& g, const Clustering& c, int m,
                            const GaussianVector& gv) {
    check_shapes(g, c, gv);
    auto pre = omega_star_member(g, c, m);
    if (!pre.member)
        throw std::invalid_argument("enhance_graph: input not minimal: " +
                                    pre.violations.front());
    auto singletons = c.singleton_vertices();
    if (singletons.empty())
        throw std::invalid_argument("enhance_graph: needs at least one singleton");

    RewriteResult res;
    res.graph = g;
    double cs = gv.scaling.quasi_triangle_constant();
    double lam = gv.lambda, a = gv.alpha;
    // Distance-free per-edge bounds for a pair at most `hops` cluster jumps
    // apart: an added edge costs at most lam*(hops*L+1)^a, a moved edge
    // rescales by at most (cs*(1+hops))^a * lam^2 since the singleton is
    // farther than one jump.
    auto worst_add = [&](int hops) {
        return lam * std::pow(double(hops) * c.L + 1.0, a);
    };
    auto worst_move = [&](int hops) {
        return std::pow(cs * (1.0 + double(hops)), a) * lam * lam;
    };

    // The case-1 operation on the pair (u*, j): move ceil(l/2) of the l
    // edges (s, u*) onto (s, j), then add m - floor(l/2) edges (u*, j).
    auto pair_raise = [&](int ustar, int j, int s, int hops, double* factor,
                          double* worst) {
        int l = res.graph.degree(ustar);
        int moved = (l + 1) / 2;
        int added = m - l / 2;
        res.graph.mult(s, ustar) -= moved;
        res.graph.mult(ustar, s) -= moved;
        res.graph.mult(s, j) += moved;
        res.graph.mult(j, s) += moved;
        res.graph.mult(ustar, j) += added;
        res.graph.mult(j, ustar) += added;
        double gamma =
            moved > 0 ? std::max(1.0, dist(gv, s, j) / dist(gv, s, ustar)) : 1.0;
        *factor = std::pow(std::pow(gamma, a) * lam * lam, moved) *
                  std::pow(lower_recip(gv, ustar, j), added);
        *worst = std::pow(worst_move(hops), moved) * std::pow(worst_add(hops), added);
    };

    for (int b : c.multi_blocks()) {
        const auto& block = c.blocks[b];
        int ustar = c.representative(b);
        int l = res.graph.degree(ustar);
        int s = singletons.front();
        if (l >= 1) s = neighbor_list(res.graph, ustar).front();

        ClusterGraph before = res.graph;
        double factor = 1.0, worst = 1.0;
        int hops = static_cast<int>(block.size()) - 1;
        std::string kind;
        if (block.size() == 2) {
            kind = "enhance-case-1";
            pair_raise(ustar, block[1], s, hops, &factor, &worst);
        } else if (block.size() == 3) {
            kind = "enhance-case-2";
            int i = block[1], j = block[2];
            int half = (m + 1 - l) / 2;
            int inner = (m + l) / 2;
            res.graph.mult(ustar, i) += half;
            res.graph.mult(i, ustar) += half;
            res.graph.mult(ustar, j) += half;
            res.graph.mult(j, ustar) += half;
            res.graph.mult(i, j) += inner;
            res.graph.mult(j, i) += inner;
            factor = std::pow(lower_recip(gv, ustar, i), half) *
                     std::pow(lower_recip(gv, ustar, j), half) *
                     std::pow(lower_recip(gv, i, j), inner);
            worst = std::pow(worst_add(hops), 2 * half + inner);
        } else {
            kind = "enhance-case-3";
            // Cycle over all non-representative points except the last one,
            // which is raised together with u* by the case-1 operation.
            std::vector<int> others(block.begin() + 1, block.end());
            int last = others.back();
            others.pop_back();
            int w = (m + 1) / 2;
            int n = static_cast<int>(others.size());
            for (int t = 0; t < n; ++t) {
                int p = others[t], q = others[(t + 1) % n];
                res.graph.mult(p, q) += w;
                res.graph.mult(q, p) += w;
                factor *= std::pow(lower_recip(gv, p, q), w);
                worst *= std::pow(worst_add(hops), w);
            }
            double f1, w1;
            pair_raise(ustar, last, s, hops, &f1, &w1);
            factor *= f1;
            worst *= w1;
        }
        res.certificates.push_back(
            make_certificate(kind, factor, worst, before, res.graph, gv));
    }

    for (int v = 0; v < res.graph.K(); ++v) {
        int deg = res.graph.degree(v);
        if (deg != m && deg != m + 1) {
            std::ostringstream os;
            os << "enhance_graph: vertex " << v << " finished with degree " << deg;
            throw std::logic_error(os.str());
        }
    }
    res.total_factor = 1.0;
    res.log_total_factor = 0.0;
    for (const auto& cert : res.certificates) {
        res.total_factor *= cert.factor;
        res.log_total_factor += std::log(cert.factor);
    }
    return res;
}

double no_singleton_bound(const GaussianVector& gv, const Clustering& c, int m,
                          int leg_cap) {
    if (c.has_singleton())
        throw std::invalid_argument("no_singleton_bound: clustering has a singleton");
    int w = (m + 1) / 2;
    double bound = 1.0;
    for (const auto& block : c.blocks) {
        int n = static_cast<int>(block.size());
        double cyc = 1.0;
        for (int t = 0; t < n; ++t)
            cyc *= gv.cov(block[t], block[(t + 1) % n]);
        bound *= std::pow(cyc, w);
    }
    double rhs = rhs_moment(gv.cov, m, leg_cap);
    if (bound > rhs * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "no_singleton_bound: cyclic bound " << bound
           << " exceeds the moment " << rhs;
        throw std::logic_error(os.str());
    }
    return bound;
}

std::string serialize_graph(const GraphBundle& b) {
    std::ostringstream os;
    os << std::setprecision(17);
    int K = static_cast<int>(b.gv.points.size());
    os << "k " << K << "\n";
    os << "m " << b.m << "\n";
    os << "alpha " << b.gv.alpha << "\n";
    os << "eps " << b.gv.eps << "\n";
    os << "lambda " << b.gv.lambda << "\n";
    os << "l " << b.clustering.L << "\n";
    os << "scaling";
    for (double s : b.gv.scaling.exponents()) os << ' ' << s;
    os << "\n";
    for (int i = 0; i < K; ++i) {
        os << "point " << i;
        for (double x : b.gv.points[i]) os << ' ' << x;
        os << "\n";
    }
    for (int i = 0; i < K; ++i)
        for (int j = i; j < K; ++j) os << "cov " << i << ' ' << j << ' '
                                       << b.gv.cov(i, j) << "\n";
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j)
            if (b.graph.mult(i, j) > 0)
                os << "edge " << i << ' ' << j << ' ' << b.graph.mult(i, j) << "\n";
    return os.str();
}

GraphBundle parse_graph(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int K = -1, m = -1;
    double alpha = 0.0, eps = 0.0, lambda = 0.0, L = 0.0;
    std::vector<double> sc;
    std::vector<Point> pts;
    std::vector<std::tuple<int, int, double>> covs;
    std::vector<std::tuple<int, int, int>> edges;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto fail = [&](const std::string& what) {
            std::ostringstream os;
            os << "graph parse error at line " << lineno << ": " << what;
            throw std::invalid_argument(os.str());
        };
        if (key == "k") {
            if (!(ls >> K) || K <= 0) fail("bad k");
        } else if (key == "m") {
            if (!(ls >> m) || m < 0) fail("bad m");
        } else if (key == "alpha") {
            if (!(ls >> alpha)) fail("bad alpha");
        } else if (key == "eps") {
            if (!(ls >> eps)) fail("bad eps");
        } else if (key == "lambda") {
            if (!(ls >> lambda)) fail("bad lambda");
        } else if (key == "l") {
            if (!(ls >> L)) fail("bad l");
        } else if (key == "scaling") {
            double v;
            while (ls >> v) sc.push_back(v);
            if (sc.empty()) fail("empty scaling");
        } else if (key == "point") {
            int i;
            if (!(ls >> i)) fail("bad point index");
            if (i != static_cast<int>(pts.size())) fail("point indices must ascend");
            Point p;
            double v;
            while (ls >> v) p.push_back(v);
            if (p.empty()) fail("empty point");
            pts.push_back(p);
        } else if (key == "cov") {
            int i, j;
            double v;
            if (!(ls >> i >> j >> v)) fail("bad cov entry");
            covs.emplace_back(i, j, v);
        } else if (key == "edge") {
            int i, j, mlt;
            if (!(ls >> i >> j >> mlt)) fail("bad edge entry");
            if (mlt < 0) fail("negative multiplicity");
            edges.emplace_back(i, j, mlt);
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (K <= 0 || m < 0 || eps <= 0.0 || lambda <= 0.0 || L <= 0.0 || sc.empty())
        throw std::invalid_argument("graph parse error: incomplete header");
    if (static_cast<int>(pts.size()) != K)
        throw std::invalid_argument("graph parse error: point count mismatch");

    Scaling scaling(sc);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(K, K, 0.0);
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(K, K);
    for (auto [i, j, v] : covs) {
        if (i < 0 || j < 0 || i >= K || j >= K)
            throw std::invalid_argument("graph parse error: cov index out of range");
        cov(i, j) = cov(j, i) = v;
        seen(i, j) = seen(j, i) = 1;
    }
    if (!seen.all())
        throw std::invalid_argument("graph parse error: cov entries missing");

    GraphBundle b;
    b.m = m;
    b.gv = gaussian_from_matrix(cov, pts, scaling, alpha, eps, lambda);
    b.clustering = build_clusters(pts, L, eps, scaling);
    b.graph = empty_graph(K);
    for (auto [i, j, mlt] : edges) {
        if (i < 0 || j < 0 || i >= K || j >= K || i == j)
            throw std::invalid_argument("graph parse error: edge index out of range");
        b.graph.mult(i, j) += mlt;
        b.graph.mult(j, i) += mlt;
    }
    return b;
}

void write_graph_file(const std::string& path, const GraphBundle& b) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << serialize_graph(b);
}

GraphBundle read_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_graph(buf.str());
}

} // namespace wicklab
