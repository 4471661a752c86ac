#include "markovlab/types.hpp"

#include <charconv>

namespace markovlab {

double kahan_sum(const double* values, Index count) {
    double sum = 0.0;
    double comp = 0.0;
    for (Index i = 0; i < count; ++i) {
        const double y = values[i] - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

double kahan_sum(const Vec& values) { return kahan_sum(values.data(), values.size()); }

Vec kahan_row_sums(const Mat& m, bool skip_diagonal) {
    const Index n = m.rows();
    Vec out(n);
    for (Index i = 0; i < n; ++i) {
        const double* row = m.data() + i * m.cols();
        if (!skip_diagonal) {
            out(i) = kahan_sum(row, m.cols());
            continue;
        }
        double sum = 0.0;
        double comp = 0.0;
        for (Index j = 0; j < m.cols(); ++j) {
            if (j == i) continue;
            const double y = row[j] - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        out(i) = sum;
    }
    return out;
}

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

}  // namespace markovlab
