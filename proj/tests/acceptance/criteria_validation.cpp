// Criterion 8: the variant/data requirement matrix — 4 variants x
// {connected-network requirement, one-study-test admission} — exercised by
// dedicated fixtures with the documented outcomes.

#include "acceptance.hpp"
#include "fixtures.hpp"

#include "dtanma/dataset.hpp"

namespace {

using namespace dtanma;

bool has_error(const ValidationReport& r, const std::string& rule) {
  for (const auto& f : r.findings)
    if (f.rule == rule && f.severity == Severity::Error) return true;
  return false;
}

bool run(std::ostream& out) {
  // Disconnected two-component network, every test in >= 2 studies.
  const Dataset disconnected = fixtures::parse_csv(
      "study_id,test_id,test_kind,group,threshold,positives,group_size\n"
      "s1,t1,binary,diseased,NA,5,10\ns1,t1,binary,nondiseased,NA,1,10\n"
      "s2,t1,binary,diseased,NA,5,10\ns2,t1,binary,nondiseased,NA,1,10\n"
      "s3,t2,binary,diseased,NA,5,10\ns3,t2,binary,nondiseased,NA,1,10\n"
      "s4,t2,binary,diseased,NA,5,10\ns4,t2,binary,nondiseased,NA,1,10\n");
  // Connected network containing a one-study test t3.
  const Dataset one_study = fixtures::parse_csv(
      "study_id,test_id,test_kind,group,threshold,positives,group_size\n"
      "s1,t1,binary,diseased,NA,5,10\ns1,t1,binary,nondiseased,NA,1,10\n"
      "s1,t2,binary,diseased,NA,5,10\ns1,t2,binary,nondiseased,NA,1,10\n"
      "s2,t1,binary,diseased,NA,5,10\ns2,t1,binary,nondiseased,NA,1,10\n"
      "s2,t2,binary,diseased,NA,5,10\ns2,t2,binary,nondiseased,NA,1,10\n"
      "s3,t1,binary,diseased,NA,5,10\ns3,t1,binary,nondiseased,NA,1,10\n"
      "s3,t3,binary,diseased,NA,5,10\ns3,t3,binary,nondiseased,NA,1,10\n");

  const NetworkGraph gd = build_network_graph(disconnected);
  const NetworkGraph go = build_network_graph(one_study);
  if (gd.component_count != 2 || go.component_count != 1) {
    out << "fixture shape wrong";
    return false;
  }

  struct Cell {
    ModelVariant variant;
    bool rejects_disconnected;
    bool rejects_one_study;
  };
  const Cell cells[] = {
      {ModelVariant::Independent, false, true},
      {ModelVariant::MetaRegression, false, false},
      {ModelVariant::Anova, true, true},
      {ModelVariant::AnovaPlus, true, false},
  };

  int checked = 0;
  for (const auto& c : cells) {
    const auto rd = validate_for_model(disconnected, gd, c.variant);
    if (has_error(rd, "connected-network") != c.rejects_disconnected) {
      out << to_string(c.variant) << ": connected-network cell wrong";
      return false;
    }
    ++checked;
    const auto ro = validate_for_model(one_study, go, c.variant);
    if (has_error(ro, "one-study-test") != c.rejects_one_study) {
      out << to_string(c.variant) << ": one-study-test cell wrong";
      return false;
    }
    ++checked;
  }
  out << checked << "/8 cells match the documented outcomes";
  return checked == 8;
}

const acceptance::Register reg(8, "variant/data validation matrix", run);

}  // namespace
