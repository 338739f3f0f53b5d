#include <cmath>
#include <random>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "cpdp/error.hpp"
#include "cpdp/kinematics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using cpdp::ErrorCode;
using namespace cpdp::kinematics;

TEST(Kinematics, DhTransformMatchesElementaryProduct) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double th = u(gen), d = u(gen), a = std::abs(u(gen)), al = u(gen);
    const auto ours = dh_transform(th, d, a, al);
    const auto ref = oracle::dh(th, d, a, al);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(ours(i, j), ref[i][j], 1e-14);
    }
  }
}

TEST(Kinematics, DefaultArmRestPose) {
  const auto arm = KinematicChain::default_arm();
  ASSERT_EQ(arm.dof(), 4u);
  const auto pos = forward_kinematics(arm, {Eigen::VectorXd::Zero(4), 0.0});
  EXPECT_NEAR((pos.at("shoulder")).norm(), 0.0, 1e-12);
  EXPECT_NEAR((pos.at("elbow") - cpdp::Vec3(0, 0, -0.30)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((pos.at("wrist") - cpdp::Vec3(0, 0, -0.55)).norm(), 0.0, 1e-12);
  EXPECT_EQ(arm.end_joint(), "wrist");
}

TEST(Kinematics, ElbowFlexionBendsForwardLikeShoulderFlexion) {
  const auto arm = KinematicChain::default_arm();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(4);
  q[3] = M_PI / 2;
  const auto flexed_elbow = forward_kinematics(arm, {q, 0.0}).at("wrist");
  q.setZero();
  q[0] = 0.3;
  const auto flexed_shoulder = forward_kinematics(arm, {q, 0.0}).at("wrist");
  // Both motions move the wrist off the vertical in the same horizontal direction.
  EXPECT_GT(flexed_elbow.x() * flexed_shoulder.x(), 0.0);
  EXPECT_NEAR(flexed_elbow.y(), 0.0, 1e-12);
}

TEST(Kinematics, ForwardKinematicsMatchesOracle) {
  const auto arm = KinematicChain::default_arm();
  const auto links = fixtures::oracle_links(arm);
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto q = fixtures::random_angles(arm, gen);
    const auto pos = forward_kinematics(arm, {q, 0.0});
    const auto origins = oracle::frame_origins(links, fixtures::to_std(q));
    for (const auto& [name, frame] : arm.named_joints()) {
      for (int r = 0; r < 3; ++r) EXPECT_NEAR(pos.at(name)[r], origins[frame][r], 1e-12);
    }
  }
}

TEST(Kinematics, JointPositionsFollowNameOrder) {
  const auto arm = KinematicChain::default_arm();
  Eigen::VectorXd q(4);
  q << 0.3, -0.2, 0.5, 1.1;
  std::vector<cpdp::Vec3> out;
  joint_positions(arm, q, out);
  const auto map = forward_kinematics(arm, {q, 0.0});
  ASSERT_EQ(out.size(), arm.joint_names().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i], map.at(arm.joint_names()[i]));
  }
}

TEST(Kinematics, AnalyticJacobianMatchesOracleDifferences) {
  const auto arm = KinematicChain::default_arm();
  const auto links = fixtures::oracle_links(arm);
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = fixtures::random_angles(arm, gen);
    for (const auto& joint : {std::string("elbow"), std::string("wrist")}) {
      const auto jac = jacobian(arm, {q, 0.0}, joint);
      const auto ref = oracle::central_difference_jacobian(links, fixtures::to_std(q),
                                                           arm.frame_of(joint), 1e-6);
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(jac(r, c), ref[r][c], 1e-8);
      }
    }
  }
}

TEST(Kinematics, CentralDifferenceJacobianAgreesWithAnalytic) {
  const auto arm = KinematicChain::default_arm();
  Eigen::VectorXd q(4);
  q << 0.4, 0.2, -0.6, 1.3;
  const auto a = jacobian(arm, {q, 0.0}, "wrist", JacobianMethod::kAnalytic);
  const auto fd = jacobian(arm, {q, 0.0}, "wrist", JacobianMethod::kCentralDifference);
  EXPECT_LT((a - fd).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Kinematics, ShoulderJacobianIsZero) {
  const auto arm = KinematicChain::default_arm();
  const auto jac = jacobian(arm, {Eigen::VectorXd::Constant(4, 0.3), 0.0}, "shoulder");
  EXPECT_EQ(jac.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Kinematics, PseudoDetMatchesGramDeterminant) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    for (int cols : {3, 4, 6}) {
      Eigen::MatrixXd j(3, cols);
      std::vector<std::vector<double>> ref(3, std::vector<double>(cols));
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < cols; ++c) ref[r][c] = j(r, c) = n(gen);
      }
      const double expected = oracle::pseudo_det_via_gram(ref);
      EXPECT_NEAR(pseudo_det(j), expected, 1e-9 * std::max(1.0, expected));
    }
  }
}

TEST(Kinematics, PseudoDetRejectsWrongShape) {
  try {
    pseudo_det(Eigen::MatrixXd::Ones(2, 4));
    FAIL() << "expected an error";
  } catch (const cpdp::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedShape);
  }
  EXPECT_THROW(pseudo_det(Eigen::MatrixXd::Ones(3, 2)), cpdp::Error);
}

TEST(Kinematics, PseudoDetVanishesForRankDeficient) {
  Eigen::MatrixXd j(3, 4);
  j << 1, 2, 3, 4, 2, 4, 6, 8, 0, 1, 0, 1;
  EXPECT_NEAR(pseudo_det(j), 0.0, 1e-12);
}

TEST(Kinematics, ChainValidation) {
  const auto arm = KinematicChain::default_arm();
  auto links = arm.links();
  Eigen::VectorXd lb = arm.angle_lb(), ub = arm.angle_ub(), vel = arm.vel_ub();

  auto bad_links = links;
  bad_links[1].a = -0.1;
  EXPECT_THROW(KinematicChain(bad_links, lb, ub, vel, arm.named_joints()), cpdp::Error);

  bad_links = links;
  bad_links[1].alpha = 4.0;
  EXPECT_THROW(KinematicChain(bad_links, lb, ub, vel, arm.named_joints()), cpdp::Error);

  bad_links = links;
  bad_links[2].joint_index = 0;  // index 0 now appears twice
  EXPECT_THROW(KinematicChain(bad_links, lb, ub, vel, arm.named_joints()), cpdp::Error);

  Eigen::VectorXd bad_ub = ub;
  bad_ub[3] = lb[3];
  EXPECT_THROW(KinematicChain(links, lb, bad_ub, vel, arm.named_joints()), cpdp::Error);

  Eigen::VectorXd bad_vel = vel;
  bad_vel[0] = 0.0;
  EXPECT_THROW(KinematicChain(links, lb, ub, bad_vel, arm.named_joints()), cpdp::Error);

  auto bad_names = arm.named_joints();
  bad_names["hand"] = 99;
  EXPECT_THROW(KinematicChain(links, lb, ub, vel, bad_names), cpdp::Error);
}

TEST(Kinematics, AngleLengthMismatchIsRejected) {
  const auto arm = KinematicChain::default_arm();
  EXPECT_THROW(forward_kinematics(arm, {Eigen::VectorXd::Zero(3), 0.0}), cpdp::Error);
}

TEST(Kinematics, ClampAndBounds) {
  const auto arm = KinematicChain::default_arm();
  Eigen::VectorXd q(4);
  q << 10.0, -10.0, 0.1, -1.0;
  const auto c = arm.clamp(q);
  EXPECT_TRUE(arm.within_bounds(c));
  EXPECT_FALSE(arm.within_bounds(q));
  EXPECT_EQ(c[0], arm.angle_ub()[0]);
  EXPECT_EQ(c[1], arm.angle_lb()[1]);
  EXPECT_EQ(c[2], 0.1);
  EXPECT_TRUE(arm.within_bounds(arm.rest_pose()));
}

TEST(Kinematics, ChainJsonRoundTrip) {
  const auto arm = KinematicChain::default_arm();
  const auto back = parse_chain(chain_to_json(arm));
  ASSERT_EQ(back.links().size(), arm.links().size());
  for (std::size_t i = 0; i < arm.links().size(); ++i) {
    EXPECT_EQ(back.links()[i].theta_offset, arm.links()[i].theta_offset);
    EXPECT_EQ(back.links()[i].d, arm.links()[i].d);
    EXPECT_EQ(back.links()[i].a, arm.links()[i].a);
    EXPECT_EQ(back.links()[i].alpha, arm.links()[i].alpha);
    EXPECT_EQ(back.links()[i].joint_index, arm.links()[i].joint_index);
  }
  EXPECT_EQ(back.angle_lb(), arm.angle_lb());
  EXPECT_EQ(back.angle_ub(), arm.angle_ub());
  EXPECT_EQ(back.vel_ub(), arm.vel_ub());
  EXPECT_EQ(back.named_joints(), arm.named_joints());
}

TEST(Kinematics, ChainParseErrors) {
  EXPECT_THROW(parse_chain("{"), cpdp::Error);
  EXPECT_THROW(parse_chain(R"({"links": []})"), cpdp::Error);
  try {
    parse_chain("not json");
  } catch (const cpdp::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
}

// Properties over random configurations.

TEST(KinematicsProperty, ComposedRotationsStayOrthonormal) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(-M_PI, M_PI);
  std::uniform_real_distribution<double> len(0.0, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DhLink> links;
    for (std::size_t i = 0; i < 10; ++i) links.push_back({u(gen), len(gen), len(gen), u(gen), i});
    const Eigen::VectorXd lb = Eigen::VectorXd::Constant(10, -M_PI);
    const Eigen::VectorXd ub = Eigen::VectorXd::Constant(10, M_PI);
    const KinematicChain chain(links, lb, ub, Eigen::VectorXd::Ones(10), {{"tip", 10}});
    Eigen::VectorXd q(10);
    for (auto& v : q) v = u(gen);
    const auto frames = frame_transforms(chain, q);
    for (const auto& f : frames) {
      EXPECT_TRUE(is_rigid_transform(f, 1e-9));
      const Eigen::Matrix3d r = f.topLeftCorner<3, 3>();
      EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(KinematicsProperty, FirstOrderTaylorConsistency) {
  const auto arm = KinematicChain::default_arm();
  std::mt19937_64 gen(23);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto q = fixtures::random_angles(arm, gen, 1e-3);
    Eigen::VectorXd delta(4);
    for (auto& v : delta) v = n(gen);
    delta *= 1e-4 / delta.norm();
    const auto p0 = forward_kinematics(arm, {q, 0.0});
    const auto p1 = forward_kinematics(arm, {q + delta, 0.0});
    for (const auto& joint : arm.joint_names()) {
      const auto jac = jacobian(arm, {q, 0.0}, joint);
      EXPECT_LE((p1.at(joint) - p0.at(joint) - jac * delta).norm(), 1e-6);
    }
  }
}

TEST(KinematicsProperty, PseudoDetIsAbsDeterminantForSquare) {
  std::mt19937_64 gen(29);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Matrix3d j;
    for (auto& v : j.reshaped()) v = n(gen);
    EXPECT_NEAR(pseudo_det(j), std::abs(j.determinant()), 1e-9);
  }
}

TEST(KinematicsProperty, BoneLengthsAreConstant) {
  const auto arm = KinematicChain::default_arm();
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pos = forward_kinematics(arm, {fixtures::random_angles(arm, gen), 0.0});
    EXPECT_NEAR((pos.at("elbow") - pos.at("shoulder")).norm(), 0.30, 1e-9);
    EXPECT_NEAR((pos.at("wrist") - pos.at("elbow")).norm(), 0.25, 1e-9);
  }
}

}  // namespace
