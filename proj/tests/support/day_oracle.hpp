#pragma once

#include <vector>

#include "medsafe/codes.hpp"
#include "medsafe/indicator.hpp"

namespace medsafe::fixture {

/// Evaluates a condition one day at a time straight from the event list.
bool holds_on(const Condition& c, const PatientProfile& p, const CodeDictionary& dict, Date d);

/// Maximal runs of days in [from, to] where `c` holds, by scanning each day.
std::vector<DayInterval> brute_force_days(const Condition& c, const PatientProfile& p, const CodeDictionary& dict,
                                          Date from, Date to);

}  // namespace medsafe::fixture
