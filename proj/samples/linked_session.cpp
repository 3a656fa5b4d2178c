// Walks a linked session against an in-memory dataset: select a design on
// one plot, read it back from the other, rotate and move the plots, replay.

#include <cstdio>
#include <sstream>

#include "ridgeview/blade.hpp"
#include "ridgeview/service.hpp"

int main() {
    using namespace ridgeview;
    DemoOptions opt;
    opt.n = 400;
    auto table = make_demo_table(opt);

    std::vector<TriangleMesh> meshes;
    for (const auto& s : table.samples) meshes.push_back(make_blade(denormalize_design(s.x, table.domain), opt.shape));
    auto catalog = GeometryCatalog::in_memory(make_blade(Eigen::VectorXd(), opt.shape), std::move(meshes));

    std::vector<DatasetBundle> bundles;
    bundles.push_back(compute_bundle("demo", std::move(table), {"pressure_ratio", "efficiency"}, std::move(catalog)));
    Service svc(std::move(bundles), {});

    for (const char* ev : {R"({"op":"select_point","args":{"plot":"A","index":17}})",
                           R"({"op":"activate_selector","args":{"plot":"B","selector":"rotate","axis":"X"}})",
                           R"({"op":"rotate_plot","args":{"plot":"B","axis":"X","direction":1}})",
                           R"({"op":"rotate_plot","args":{"plot":"A","axis":"X","direction":1}})",
                           R"({"op":"activate_selector","args":{"plot":"A","selector":"move"}})",
                           R"({"op":"activate_selector","args":{"plot":"B","selector":"move"}})",
                           R"({"op":"move_plots","args":{"plots":["A","B"],"target":[0,1,-4]}})"}) {
        const auto r = svc.handle_session_event("walkthrough", ev);
        const auto j = json::parse(r.body);
        std::printf("%d %s\n", r.status, j.contains("error") ? j["error"].get<std::string>().c_str() : "ok");
        if (j.contains("selection"))
            std::printf("    A point %s, B point %s, geometry %s, max displacement %.4f mm\n",
                        j["selection"]["plot_points"]["A"]["i"].dump().c_str(),
                        j["selection"]["plot_points"]["B"]["i"].dump().c_str(),
                        j["selection"]["geometry_key"].get<std::string>().c_str(),
                        j["selection"]["diff_summary"]["max_displacement"].get<double>());
    }

    const auto state = *svc.session_state("walkthrough");
    std::stringstream log;
    for (const auto& e : state.history) log << event_log_line(e);
    const auto replayed = replay(read_event_log(log), [&](const std::string& id) { return svc.dataset_size(id); });
    std::printf("replay matches: %s\n", replayed == state ? "yes" : "no");
    std::printf("%s\n", dump_json(session_to_json(state)["plot_poses"]).c_str());
}
