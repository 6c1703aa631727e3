#include "dbdt/metrics.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dbdt/core.hpp"

namespace dbdt {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels, const char* what) {
    if (scores.size() != labels.size()) {
        throw InputError(std::string(what) + ": scores and labels differ in length");
    }
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels, const char* what) {
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) {
        throw InputError(std::string(what) + ": both classes must be present (single-class input)");
    }
    return {pos, neg};
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });
    return idx;
}

double cross(const RocPoint& o, const RocPoint& a, const RocPoint& b) {
    return (a.fpr - o.fpr) * (b.tpr - o.tpr) - (a.tpr - o.tpr) * (b.fpr - o.fpr);
}

// Upper convex hull, ascending fpr.
std::vector<RocPoint> upper_hull(RocCurve points) {
    std::sort(points.begin(), points.end(), [](const RocPoint& l, const RocPoint& r) {
        return l.fpr < r.fpr || (l.fpr == r.fpr && l.tpr < r.tpr);
    });
    std::vector<RocPoint> hull;
    for (const auto& p : points) {
        while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), p) >= 0.0) {
            hull.pop_back();
        }
        hull.push_back(p);
    }
    return hull;
}

}  // namespace

ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
    check_lengths(scores, labels, "confusion");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] == 1;
        if (predicted && actual) {
            ++cm.tp;
        } else if (predicted) {
            ++cm.fp;
        } else if (actual) {
            ++cm.fn;
        } else {
            ++cm.tn;
        }
    }
    return cm;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores, labels, "roc_curve");
    const auto [pos, neg] = class_counts(labels, "roc_curve");
    const auto idx = order_descending(scores);
    RocCurve curve{{0.0, 0.0}};
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        while (k < idx.size() && scores[idx[k]] == s) {
            (labels[idx[k]] == 1 ? tp : fp)++;
            ++k;
        }
        curve.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                         static_cast<double>(tp) / static_cast<double>(pos)});
    }
    return curve;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores, labels, "auc");
    const auto [pos, neg] = class_counts(labels, "auc");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
    double credit = 0.0;
    std::size_t neg_below = 0;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        std::size_t group_pos = 0;
        std::size_t group_neg = 0;
        while (k < idx.size() && scores[idx[k]] == s) {
            (labels[idx[k]] == 1 ? group_pos : group_neg)++;
            ++k;
        }
        credit += static_cast<double>(group_pos * neg_below) + 0.5 * static_cast<double>(group_pos * group_neg);
        neg_below += group_neg;
    }
    return credit / (static_cast<double>(pos) * static_cast<double>(neg));
}

double roc_area(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
    }
    return area;
}

double h_measure(std::span<const double> scores, std::span<const int> labels, const Severity& severity) {
    check_lengths(scores, labels, "h_measure");
    const auto [pos, neg] = class_counts(labels, "h_measure");
    const double a = severity.shape_a;
    const double b = severity.shape_b;
    if (!(a > 0.0 && b > 0.0)) {
        throw InputError("h_measure: Beta shape parameters must be positive");
    }
    const double n = static_cast<double>(pos + neg);
    const double pi1 = static_cast<double>(pos) / n;  // positive prior
    const double pi0 = 1.0 - pi1;
    const double mean_c = a / (a + b);

    // Integrals of u(c) and c*u(c) over [lo, hi].
    auto mass = [&](double lo, double hi) {
        return boost::math::ibeta(a, b, hi) - boost::math::ibeta(a, b, lo);
    };
    auto first_moment = [&](double lo, double hi) {
        return mean_c * (boost::math::ibeta(a + 1.0, b, hi) - boost::math::ibeta(a + 1.0, b, lo));
    };

    // Expected minimum loss when the operating point is chosen on the hull.
    // Vertex j costs c*pi0*fpr_j + (1-c)*pi1*(1-tpr_j).
    auto expected_loss = [&](const std::vector<RocPoint>& hull) {
        double loss = 0.0;
        double upper = 1.0;
        for (std::size_t j = 0; j < hull.size(); ++j) {
            double lower = 0.0;
            if (j + 1 < hull.size()) {
                const double dx = pi0 * (hull[j + 1].fpr - hull[j].fpr);
                const double dy = pi1 * (hull[j + 1].tpr - hull[j].tpr);
                lower = dy / (dx + dy);
            }
            lower = std::min(lower, upper);
            if (upper > lower) {
                const double m0 = mass(lower, upper);
                const double m1 = first_moment(lower, upper);
                loss += pi0 * hull[j].fpr * m1 + pi1 * (1.0 - hull[j].tpr) * (m0 - m1);
            }
            upper = lower;
        }
        return loss;
    };

    const auto hull = upper_hull(roc_curve(scores, labels));
    const double loss = expected_loss(hull);
    const double trivial = expected_loss({{0.0, 0.0}, {1.0, 1.0}});
    return std::clamp(1.0 - loss / trivial, 0.0, 1.0);
}

std::string roc_to_csv(const RocCurve& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "fpr,tpr\n";
    for (const auto& p : curve) {
        out << p.fpr << ',' << p.tpr << '\n';
    }
    return out.str();
}

}  // namespace dbdt
