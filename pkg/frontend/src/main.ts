import { ApiClient } from "./api.js";
import { App } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
// Same-origin API: the service mounts this bundle next to /api.
void new App(root, new ApiClient("")).start();
