import { ApiClient } from './api'
import { Studio } from './ui'

const base = new URLSearchParams(location.search).get('api') ?? ''
const root = document.getElementById('studio')
if (!root) throw new Error('missing #studio mount point')
void new Studio(new ApiClient(base), root).start()
