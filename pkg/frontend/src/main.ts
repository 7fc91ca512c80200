import { ApiClient } from "./api.js";
import { DashboardApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8787";
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
new DashboardApp(root, new ApiClient(apiBase));
