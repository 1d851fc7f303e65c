// Browser entry point: mounts the studio against a configurable API base.

import { bootStudio } from "./app.js";

const params = new URLSearchParams(window.location.search);
const apiBase =
  params.get("api") ?? localStorage.getItem("strokeboard-api") ?? "http://127.0.0.1:8000";
localStorage.setItem("strokeboard-api", apiBase);

const mount = document.getElementById("app");
if (!mount) throw new Error("missing #app mount point");

bootStudio(apiBase, mount).catch((err) => {
  mount.textContent = `failed to reach strokeboard at ${apiBase}: ${err}`;
});
