#pragma once

namespace lassotrack {

// Truncation bounds for a linear statistic η'y conditional on a polyhedral
// selection event. nu_minus/nu_plus may be ±infinity when the corresponding
// constraint set is empty; nu_zero is the slack of the direction-free
// constraints (+infinity when there are none).
struct TruncationInterval {
    double nu_minus;
    double nu_plus;
    double nu_zero;
};

} // namespace lassotrack
