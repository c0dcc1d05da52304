#pragma once

#include <array>
#include <string>
#include <vector>

#include "sonomesh/common.hpp"

namespace sonomesh {

// The 16 joints: head, shoulders, elbows, wrists, hips, knees, ankles and
// three spine points. Order is fixed; every JointSet uses it.
enum class Joint : int {
    head = 0,
    l_shoulder,
    r_shoulder,
    l_elbow,
    r_elbow,
    l_wrist,
    r_wrist,
    l_hip,
    r_hip,
    l_knee,
    r_knee,
    l_ankle,
    r_ankle,
    spine_high,
    spine_mid,
    spine_low,
};

inline constexpr int kNumJoints = 16;
inline constexpr int kNumBones = 15;

inline const std::array<std::string, kNumJoints>& joint_names() {
    static const std::array<std::string, kNumJoints> names = {
        "head",     "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist",
        "r_wrist",  "l_hip",      "r_hip",      "l_knee",  "r_knee",  "l_ankle",
        "r_ankle",  "spine_high", "spine_mid",  "spine_low"};
    return names;
}

// Parent-child pairs forming a tree over the 16 joints.
inline const std::array<std::pair<int, int>, kNumBones>& bone_list() {
    using J = Joint;
    static const std::array<std::pair<int, int>, kNumBones> bones = {{
        {(int)J::spine_high, (int)J::head},
        {(int)J::spine_mid, (int)J::spine_high},
        {(int)J::spine_low, (int)J::spine_mid},
        {(int)J::spine_low, (int)J::l_hip},
        {(int)J::spine_low, (int)J::r_hip},
        {(int)J::spine_high, (int)J::l_shoulder},
        {(int)J::spine_high, (int)J::r_shoulder},
        {(int)J::l_shoulder, (int)J::l_elbow},
        {(int)J::l_elbow, (int)J::l_wrist},
        {(int)J::r_shoulder, (int)J::r_elbow},
        {(int)J::r_elbow, (int)J::r_wrist},
        {(int)J::l_hip, (int)J::l_knee},
        {(int)J::l_knee, (int)J::l_ankle},
        {(int)J::r_hip, (int)J::r_knee},
        {(int)J::r_knee, (int)J::r_ankle},
    }};
    return bones;
}

struct JointSet2D {
    std::array<Vec2, kNumJoints> joints{};
    std::array<bool, kNumJoints> flagged{};  // filled from template, low confidence
};

struct JointSet3D {
    std::array<Vec3, kNumJoints> joints{};
};

inline const std::vector<std::string>& pose_names() {
    static const std::vector<std::string> names = {
        "standing",
        "arms_spreading",
        "raising_one_hand",
        "raising_both_hands",
        "arms_spread_diagonally_upward",
        "arms_stretched_downward",
        "arms_extended_straight_up",
        "raising_one_arm_to_the_side",
    };
    return names;
}

// Body-frame joint positions for a named pose, in units of body height.
// x is body width (left negative), y runs 0 at the ankles to ~1 at the head.
// Arm joints above the head are allowed (y > 1).
inline std::array<Vec2, kNumJoints> pose_joints_unit(const std::string& pose_id) {
    std::array<Vec2, kNumJoints> j{};
    j[(int)Joint::head] = {0.0, 1.0};
    j[(int)Joint::spine_high] = {0.0, 0.82};
    j[(int)Joint::spine_mid] = {0.0, 0.70};
    j[(int)Joint::spine_low] = {0.0, 0.58};
    j[(int)Joint::l_shoulder] = {-0.12, 0.82};
    j[(int)Joint::r_shoulder] = {0.12, 0.82};
    j[(int)Joint::l_hip] = {-0.07, 0.54};
    j[(int)Joint::r_hip] = {0.07, 0.54};
    j[(int)Joint::l_knee] = {-0.08, 0.28};
    j[(int)Joint::r_knee] = {0.08, 0.28};
    j[(int)Joint::l_ankle] = {-0.08, 0.0};
    j[(int)Joint::r_ankle] = {0.08, 0.0};

    auto arms_down = [&] {
        j[(int)Joint::l_elbow] = {-0.15, 0.61};
        j[(int)Joint::r_elbow] = {0.15, 0.61};
        j[(int)Joint::l_wrist] = {-0.16, 0.43};
        j[(int)Joint::r_wrist] = {0.16, 0.43};
    };
    auto arm_up = [&](int side) {  // side -1 left, +1 right
        const double s = side;
        j[side < 0 ? (int)Joint::l_elbow : (int)Joint::r_elbow] = {s * 0.18, 0.96};
        j[side < 0 ? (int)Joint::l_wrist : (int)Joint::r_wrist] = {s * 0.21, 1.12};
    };
    auto arm_side = [&](int side) {  // horizontal T
        const double s = side;
        j[side < 0 ? (int)Joint::l_elbow : (int)Joint::r_elbow] = {s * 0.29, 0.82};
        j[side < 0 ? (int)Joint::l_wrist : (int)Joint::r_wrist] = {s * 0.47, 0.82};
    };

    if (pose_id == "standing") {
        arms_down();
    } else if (pose_id == "arms_spreading") {
        arm_side(-1);
        arm_side(+1);
    } else if (pose_id == "raising_one_hand") {
        arms_down();
        arm_up(+1);
    } else if (pose_id == "raising_both_hands") {
        arm_up(-1);
        arm_up(+1);
    } else if (pose_id == "arms_spread_diagonally_upward") {
        j[(int)Joint::l_elbow] = {-0.26, 0.94};
        j[(int)Joint::r_elbow] = {0.26, 0.94};
        j[(int)Joint::l_wrist] = {-0.38, 1.06};
        j[(int)Joint::r_wrist] = {0.38, 1.06};
    } else if (pose_id == "arms_stretched_downward") {
        j[(int)Joint::l_elbow] = {-0.14, 0.60};
        j[(int)Joint::r_elbow] = {0.14, 0.60};
        j[(int)Joint::l_wrist] = {-0.14, 0.40};
        j[(int)Joint::r_wrist] = {0.14, 0.40};
    } else if (pose_id == "arms_extended_straight_up") {
        j[(int)Joint::l_elbow] = {-0.12, 0.98};
        j[(int)Joint::r_elbow] = {0.12, 0.98};
        j[(int)Joint::l_wrist] = {-0.12, 1.15};
        j[(int)Joint::r_wrist] = {0.12, 1.15};
    } else if (pose_id == "raising_one_arm_to_the_side") {
        arms_down();
        arm_side(+1);
    } else {
        throw DomainError("unknown pose_id: " + pose_id);
    }
    return j;
}

// Canonical 3D template: the standing pose placed in the body frame with
// z = 0 (the scene model is planar), centered so the volume fits [-1,1]^3
// scaled by body height.
struct TemplateSkeleton {
    JointSet3D joints;
    std::array<std::pair<int, int>, kNumBones> bones = bone_list();
    std::array<double, kNumBones> lengths{};
    double height = 1.7;

    static TemplateSkeleton standing(double height = 1.7) {
        TemplateSkeleton t;
        t.height = height;
        auto j2 = pose_joints_unit("standing");
        for (int i = 0; i < kNumJoints; ++i) {
            // center vertically: y in [-h/2, h/2]
            t.joints.joints[i] = {j2[i].x * height, (j2[i].y - 0.5) * height, 0.0};
        }
        for (int b = 0; b < kNumBones; ++b) {
            auto [p, c] = t.bones[b];
            t.lengths[b] = (t.joints.joints[c] - t.joints.joints[p]).norm();
        }
        return t;
    }
};

}  // namespace sonomesh
