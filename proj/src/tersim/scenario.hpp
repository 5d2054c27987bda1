// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tersim/netchannel.hpp"
#include "tersim/session.hpp"

namespace tersim {

inline constexpr int kFileFormatVersion = 1;

// Parse errors carry `<source>:<line>:<column>: message` with 1-based positions.
// `base_dir` resolves relative `phantom: {file: ...}` references.
Scenario parse_scenario(std::string_view yaml, std::string_view source = "<scenario>",
                        const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);  // throws kIo or kParse

struct CohortSpec {
  std::size_t n_patients = 58;
  double aaa_prevalence = 0.15;
  std::size_t failed_exams = 4;  // injected remote-arm failures

  // AAA maximal diameter: log-normal, clipped.
  double aaa_diameter_median = 0.054;
  double aaa_diameter_sigma_log = 0.35;
  std::array<double, 2> aaa_diameter_range{0.032, 0.085};

  // Non-aneurysmal aortic radius: normal, clipped.
  double aorta_radius_mean = 0.0095;
  double aorta_radius_sd = 0.001;
  std::array<double, 2> aorta_radius_range{0.007, 0.012};

  double thrombus_probability = 0.75;  // given AAA

  // none, segmentary, diffuse
  std::array<double, 3> grade_mix{14.0 / 53.0, 11.0 / 53.0, 28.0 / 53.0};

  ChannelParams channel = channel_preset("vthd");
  std::string channel_name = "vthd";
  std::string site_id = "site-1";
  std::uint64_t seed = 2007;

  bool operator==(const CohortSpec&) const = default;
};

void validate(const CohortSpec& c);  // throws Error(kScenarioInvalid)

CohortSpec parse_cohort(std::string_view yaml, std::string_view source = "<cohort>");
CohortSpec load_cohort(const std::filesystem::path& path);

}  // namespace tersim
